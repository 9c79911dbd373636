from hypothesis import HealthCheck, settings

# numba compiles on first call, so per-example deadlines are meaningless
settings.register_profile("default", deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")
