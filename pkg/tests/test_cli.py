import json

import pytest
from hypothesis import given
from hypothesis import strategies as st

from fpplab import cli
from fpplab.geodesics import RegionCertificationError


def run_cli(*argv):
    return cli.main([str(a) for a in argv])


# ------------------------------------------------------------ config


configs = st.builds(
    cli.ExperimentConfig,
    kind=st.sampled_from(cli.EXPERIMENTS),
    dist=st.sampled_from(["constant_one", "two_point(p=0.8, b=3.0)", "one_plus_exp(rate=1.5, p=0.25)"]),
    direction=st.sampled_from(["axis", "diagonal", "angle:0.3"]),
    n=st.lists(st.integers(1, 500), min_size=1, max_size=4).map(lambda x: tuple(sorted(set(x)))),
    m=st.lists(st.integers(1, 100), max_size=3).map(tuple),
    M=st.integers(1, 9),
    z=st.one_of(st.none(), st.floats(1.01, 10)),
    delta=st.one_of(st.none(), st.floats(0.01, 1)),
    N=st.one_of(st.none(), st.floats(0, 5)),
    t=st.floats(30, 200),
    angles=st.integers(2, 40),
    reps=st.integers(1, 10**4),
    seed=st.integers(0, 2**64 - 1),
    workers=st.integers(1, 8),
    out=st.sampled_from(["", "runs/x", "some dir/y"]),
)


@given(configs)
def test_config_round_trip(cfg):
    cfg = cfg.override({"dist": cfg.dist})  # canonical distribution text
    assert cli.ExperimentConfig.from_text(cfg.to_text()) == cfg


def test_hash_ignores_workers_and_out():
    a = cli.default_config("geodesic")
    b = a.override({"workers": "4", "out": "elsewhere"})
    c = a.override({"reps": "7"})
    assert a.config_hash == b.config_hash != c.config_hash


def test_flags_override_file(tmp_path):
    f = tmp_path / "exp.cfg"
    f.write_text("kind = geodesic\n# comment\nn = 10,20\nreps = 3\nseed = 5\n")
    args = cli.build_parser().parse_args(["geodesic", "--config", str(f), "--reps", "4"])
    cfg = cli.config_from_args(args)
    assert cfg.n == (10, 20) and cfg.reps == 4 and cfg.seed == 5


def test_config_errors(tmp_path):
    with pytest.raises(cli.ConfigError):
        cli.ExperimentConfig.from_text("kind = geodesic\nbogus = 1\n")
    with pytest.raises(cli.ConfigError):
        cli.ExperimentConfig.from_text("n = 3\n")
    f = tmp_path / "c.cfg"
    f.write_text("kind = shape\n")
    assert run_cli("geodesic", "--config", f) == 2


# ------------------------------------------------------------ runs


def test_variance_scan_contract_example(tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    argv = ["variance-scan", "--dist", "two_point(p=0.8,b=3)", "--direction", "axis",
            "--n", "32,64,128,256", "--reps", "400", "--seed", "1"]
    assert run_cli(*argv, "--out", "a") == 0
    assert sorted(p.name for p in (tmp_path / "a").iterdir()) == ["manifest.json", "results.csv", "summary.json"]
    # same command again, rerun from the manifest with two workers
    assert run_cli(*argv, "--out", "b") == 0
    assert run_cli("variance-scan", "--config", "a/manifest.json", "--out", "c", "--workers", "2") == 0
    ref = (tmp_path / "a" / "results.csv").read_bytes()
    assert (tmp_path / "b" / "results.csv").read_bytes() == ref
    assert (tmp_path / "c" / "results.csv").read_bytes() == ref
    assert (tmp_path / "c" / "summary.json").read_bytes() == (tmp_path / "a" / "summary.json").read_bytes()
    man = json.loads((tmp_path / "a" / "manifest.json").read_text())
    assert man["files"]["results.csv"] == cli._sha256(ref)
    assert man["master_seed"] == 1 and len(man["config_hash"]) == 64
    # default output location never collides
    assert run_cli(*argv[:-2], "--seed", "1", "--n", "8,16", "--reps", "200") == 0
    assert run_cli(*argv[:-2], "--seed", "1", "--n", "8,16", "--reps", "200") == 0
    runs = list((tmp_path / "runs").glob("*/run-*"))
    assert len(runs) == 2


def test_invalid_n_exits_2(tmp_path, capsys):
    assert run_cli("variance-scan", "--n", "0", "--out", tmp_path / "x") == 2
    assert "n must be >= 1" in capsys.readouterr().err
    assert not (tmp_path / "x").exists()


@pytest.mark.parametrize("argv,msg", [
    (["variance-scan", "--n", "8,16", "--reps", "100"], "reps >= 200"),
    (["variance-scan", "--n", "16,8"], "strictly increasing"),
    (["shape", "--t", "10"], "t >= 30"),
    (["theorem1", "--n", "100", "--m", "20"], "needs z"),
    (["theorem1", "--n", "100", "--m", "200", "--z", "2"], "m <= n"),
    (["geodesic", "--direction", "up"], "unknown direction"),
    (["geodesic", "--dist", "two_point(p=0.8)"], "bad distribution"),
    (["geodesic", "--reps", "many"], "bad value"),
])
def test_validation_messages(argv, msg, tmp_path, capsys):
    assert run_cli(*argv, "--out", tmp_path / "o") == 2
    assert msg in capsys.readouterr().err


def test_collision_exits_2(tmp_path):
    args = ["geodesic", "--n", "5", "--reps", "2", "--out", tmp_path / "o"]
    assert run_cli(*args) == 0
    before = (tmp_path / "o" / "results.csv").read_bytes()
    assert run_cli(*args, "--seed", "9") == 2
    assert (tmp_path / "o" / "results.csv").read_bytes() == before


def test_seed_isolation(tmp_path):
    assert run_cli("geodesic", "--n", "6,12", "--reps", "5", "--out", tmp_path / "a") == 0
    assert run_cli("geodesic", "--n", "6,12", "--reps", "8", "--out", tmp_path / "b") == 0
    ra = (tmp_path / "a" / "results.csv").read_text().splitlines()
    rb = (tmp_path / "b" / "results.csv").read_text().splitlines()
    strip = lambda rows: [r.split(",", 1)[1] for r in rows[1:]]  # config hash differs with reps
    assert strip(rb)[:len(ra) - 1] == strip(ra)


def test_worker_env_changes_nothing(tmp_path, monkeypatch):
    args = ["bridge-stats", "--n", "30", "--reps", "6"]
    assert run_cli(*args, "--out", tmp_path / "a") == 0
    monkeypatch.setenv("FPP_LAB_WORKERS", "3")
    assert run_cli(*args, "--out", tmp_path / "b") == 0
    for f in ("results.csv", "summary.json"):
        assert (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes()


def test_certification_failure_goes_to_quarantine(tmp_path, monkeypatch):
    real = cli.ROW_FUNCS["geodesic"]

    def flaky(cfg, spec, r):
        if r == 1:
            raise RegionCertificationError("region certification failed (test)")
        return real(cfg, spec, r)

    monkeypatch.setitem(cli.ROW_FUNCS, "geodesic", flaky)
    assert run_cli("geodesic", "--n", "5", "--reps", "3", "--out", tmp_path / "o") == 3
    assert not (tmp_path / "o" / "results.csv").exists()
    q = tmp_path / "o" / "quarantine"
    rows = (q / "results.csv").read_text().splitlines()
    assert [r.split(",")[2] for r in rows[1:]] == ["0", "2"]
    assert json.loads((q / "failures.json").read_text())["failures"]
    assert (q / "manifest.json").exists()


def test_csv_dialect_and_neg_inf(tmp_path):
    assert run_cli("right-edge", "--dist", "two_point(p=0.3,b=3)", "--n", "50,100", "--reps", "4",
                   "--out", tmp_path / "o") == 0
    raw = (tmp_path / "o" / "results.csv").read_bytes()
    assert b"\r" not in raw
    lines = raw.decode().splitlines()
    assert lines[0] == "config_hash,master_seed,rep,n,r"
    assert any(line.endswith(",-inf") for line in lines[1:])
    summary = json.loads((tmp_path / "o" / "summary.json").read_text())
    assert summary["summary"]["r_over_n"]["100"]["status"] == "subcritical"
    h = summary["config_hash"]
    assert all(line.startswith(h + ",0,") for line in lines[1:])


def test_print_config(capsys):
    assert run_cli("theorem1", "--z", "2", "--print-config") == 0
    text = capsys.readouterr().out
    assert cli.ExperimentConfig.from_text(text).z == 2.0


def test_theorem1_from_delta_and_N(tmp_path):
    # for two-point laws the threshold is (1 + b)/2 whatever delta3 is
    assert run_cli("theorem1", "--n", "40", "--m", "12,20", "--delta", "0.5", "--N", "0.1", "--reps", "3",
                   "--out", tmp_path / "o") == 0
    cfg = cli.load_config_file(tmp_path / "o" / "manifest.json")
    assert cli.resolve_z(cfg) == 2.0


# ------------------------------------------------------------ plot data


@pytest.fixture(scope="module")
def shape_run(tmp_path_factory):
    d = tmp_path_factory.mktemp("shape")
    assert run_cli("shape", "--t", "30", "--angles", "5", "--reps", "3", "--out", d / "o") == 0
    return d / "o"


def test_emit_plot_shape_one_row_per_angle(shape_run):
    rows = cli.emit_plot_data(shape_run / "results.csv", "shape").splitlines()
    assert rows[0] == "x,y,ci_low,ci_high"
    assert len(rows) == 1 + 5
    assert all(0 < float(r.split(",")[1]) <= 1 for r in rows[1:])


def test_emit_plot_variance_and_census(tmp_path):
    assert run_cli("variance-scan", "--n", "4,8,16", "--reps", "200", "--out", tmp_path / "v") == 0
    rows = cli.emit_plot_data(tmp_path / "v" / "results.csv", "variance").splitlines()
    assert len(rows) == 4 and all(len(r.split(",")) == 4 for r in rows)
    assert run_cli("theorem1", "--n", "40", "--m", "12,20", "--z", "2", "--reps", "4", "--out", tmp_path / "t") == 0
    assert run_cli("emit-plot", tmp_path / "t" / "results.csv", "--kind", "census") == 0
    assert len((tmp_path / "t" / "plot_census.csv").read_text().splitlines()) == 3
    # emitting again would overwrite
    assert run_cli("emit-plot", tmp_path / "t" / "results.csv", "--kind", "census") == 2


def test_emit_plot_empty_and_mismatched(tmp_path, shape_run):
    f = tmp_path / "results.csv"
    f.write_text("config_hash,master_seed,rep,n,time\n")
    assert cli.emit_plot_data(f, "variance") == "x,y,ci_low,ci_high\n"
    with pytest.raises(cli.ConfigError):
        cli.emit_plot_data(shape_run / "results.csv", "variance")
    assert run_cli("emit-plot", shape_run / "results.csv", "--kind", "census", "--out", tmp_path / "p.csv") == 2
