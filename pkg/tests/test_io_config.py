import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from diropt import fileio
from diropt.config import OUTPUT_ENV, load_config, parse_config
from diropt.errors import ConfigError
from diropt.graph import five_node_network, random_network
from diropt.problems import make_geometric_median, make_l1_least_squares, make_lq_least_squares, make_qp
from diropt.solvers import RunConfig, run

finite = st.floats(allow_nan=False, allow_infinity=False)


@settings(max_examples=100)
@given(M=arrays(np.float64, st.tuples(st.integers(1, 6), st.integers(1, 6)), elements=finite))
def test_matrix_text_round_trip(M, tmp_path_factory):
    path = tmp_path_factory.mktemp("m") / "m.csv"
    fileio.write_matrix(M, path)
    back = fileio.read_matrix(path)
    assert back.tobytes() == M.tobytes()


def test_fmt_specials():
    assert fileio.fmt(float("nan")) == "nan"
    assert fileio.fmt(float("inf")) == "inf" and fileio.fmt(-float("inf")) == "-inf"
    assert float(fileio.fmt(0.1)) == 0.1


@pytest.mark.parametrize("seed", range(5))
def test_graph_round_trip(seed, tmp_path):
    net, _ = random_network(7, 0.4, seed=seed)
    fileio.write_graph(net, tmp_path / "g.txt")
    back = fileio.read_graph(tmp_path / "g.txt")
    assert back.n == net.n and back.edges == net.edges


def test_graph_comments_and_errors():
    net = fileio.graph_from_text("# five nodes\n5\n0 1  # arc\n\n1 2\n2 3\n3 4\n4 0\n")
    assert net.n == 5 and (0, 1) in net.edges
    with pytest.raises(ValueError):
        fileio.graph_from_text("3\n0 1 2\n")
    with pytest.raises(ValueError):
        fileio.graph_from_text("")
    assert fileio.graph_from_text(fileio.graph_to_text(five_node_network())).edges == five_node_network().edges


@pytest.mark.parametrize("make", [
    lambda: make_geometric_median(3, 4, seed=1),
    lambda: make_l1_least_squares(3, 4, 5, 0.3, seed=1),
    lambda: make_lq_least_squares(3, 4, 5, 0.3, 0.5, seed=1),
    lambda: make_qp(3, 4, seed=1),
], ids=["gm", "l1", "lq", "qp"])
def test_instance_round_trip(make, tmp_path):
    inst = make()
    fileio.export_instance(inst, tmp_path / "inst")
    back = fileio.import_instance(tmp_path / "inst")
    assert back.family == inst.family and (back.n, back.p) == (inst.n, inst.p)
    for k in inst.data:
        assert back.data[k].tobytes() == np.asarray(inst.data[k], dtype=np.float64).tobytes()
    if inst.reference is None:
        assert back.reference is None
    else:
        np.testing.assert_array_equal(back.reference.x, inst.reference.x)
    X = np.random.default_rng(0).standard_normal((inst.n, inst.p))
    if inst.has_smooth:
        np.testing.assert_array_equal(back.grad(X), inst.grad(X))
    assert back.objective(X[0]) == inst.objective(X[0])


def test_trace_round_trip(tmp_path, desk_l1, desk_mix):
    trace = run(desk_l1, desk_mix, RunConfig(alpha=0.005, max_iter=50, reference=desk_l1.reference.x))
    fileio.write_trace(trace, tmp_path / "t.csv")
    text = (tmp_path / "t.csv").read_text()
    assert text.splitlines()[0] == "t,dist_to_ref,consensus_error,optimality_residual,objective,lyapunov"
    cols = fileio.read_trace(tmp_path / "t.csv")
    np.testing.assert_array_equal(cols["dist_to_ref"], [r.dist_to_ref for r in trace])
    np.testing.assert_array_equal(cols["t"], [r.t for r in trace])


class TestConfig:
    BASE = "experiment = l1_ls\nalphas = 0.01, 0.02\n"

    def test_defaults(self):
        cfg = parse_config(self.BASE)
        assert cfg.alphas == (0.01, 0.02)
        assert cfg.algorithms == ("pg_extrapush", "subgradient_push")
        assert cfg.reference_horizon == 10000 and cfg.reference_alpha == 0.01
        gm = parse_config("experiment = geometric_median\nalphas = 1\n")
        assert gm.reference_horizon == 1000

    def test_q_fractions(self):
        cfg = parse_config("experiment = lq_ls\nalphas = 0.01\nq = 0, 1/2, 2/3\n")
        assert cfg.q == pytest.approx((0.0, 0.5, 2 / 3))

    @pytest.mark.parametrize("extra, key", [
        ("bogus = 1\n", "bogus"),
        ("alphas = 0.1\n", "alphas"),
        ("n = ten\n", "n"),
        ("n = 0\n", "n"),
        ("algorithms = magic\n", "algorithms"),
        ("q = 0.3\n", "q"),
        ("reference = maybe\n", "reference"),
        ("tolerance = 2\n", "tolerance"),
    ])
    def test_rejects(self, extra, key):
        with pytest.raises(ConfigError) as info:
            parse_config(self.BASE + extra)
        assert info.value.field == key

    def test_missing_required(self):
        with pytest.raises(ConfigError):
            parse_config("experiment = l1_ls\n")
        with pytest.raises(ConfigError):
            parse_config("experiment = l1_ls\nalphas\n")

    def test_digest_tracks_values_not_comments(self):
        a = parse_config(self.BASE)
        b = parse_config("# comment\n" + self.BASE)
        c = parse_config(self.BASE + "seed = 1\n")
        assert a.digest == b.digest != c.digest

    def test_output_env(self, tmp_path, monkeypatch):
        (tmp_path / "c.cfg").write_text(self.BASE + "output_dir = somewhere\n")
        cfg = load_config(tmp_path / "c.cfg")
        monkeypatch.delenv(OUTPUT_ENV, raising=False)
        assert str(cfg.resolved_output_dir()) == "somewhere"
        monkeypatch.setenv(OUTPUT_ENV, str(tmp_path / "o"))
        assert cfg.resolved_output_dir() == tmp_path / "o"

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigError):
            load_config(tmp_path / "nope.cfg")
