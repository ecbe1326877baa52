import numpy as np
import pytest

from sdfmesh import TriangularMesher
from sdfmesh.cli import main
from sdfmesh.config import (Config, format_config, load_config, parse_config, parse_shape,
                            parse_sizing, validate_config)
from sdfmesh.exceptions import ParseError, ValidationError
from sdfmesh.io import (SUMMARY_COLUMNS, format_mesh, format_stats, format_svg, read_mesh,
                        read_stats, write_mesh)
from sdfmesh.sdf import Circle, Combined, Contour, Rectangle, write_contour_file

from conftest import unit_square_contour


class TestConfig:
    def test_defaults(self):
        cfg = parse_config("n_total = 100\n")
        assert cfg.n_total == 100
        assert cfg == Config(n_total=100)

    def test_empty_file_uses_defaults(self):
        assert parse_config("") == Config()

    def test_roundtrip(self):
        cfg = Config(n_total=1234, shape="difference(rect -1 1 -1 1, circle 0 0 0.5)",
                     sizing="linear 0.05 0.3 circle 0 0 0.5", domain=(-1, 1, -1, 1), K=0.01,
                     fixed_points=((0.5, 0.5), (0.1, 0.2)), fac_init=0.3, dt=0.15)
        assert parse_config(format_config(cfg)) == cfg

    def test_comments_and_whitespace(self):
        cfg = parse_config("# run\n  algorithm=cvd   # inline\n\nseed = 7\n")
        assert cfg.algorithm == "cvd" and cfg.seed == 7

    def test_unknown_key_reports_line(self):
        with pytest.raises(ParseError) as err:
            parse_config("n_total = 10\nbogus = 3\n")
        assert err.value.lineno == 2

    def test_bad_value(self):
        with pytest.raises(ParseError):
            parse_config("n_total = ten\n")
        with pytest.raises(ParseError):
            parse_config("n_total = 10.5\n")
        with pytest.raises(ParseError):
            parse_config("domain = 0 1 0\n")

    @pytest.mark.parametrize("text", ["fac_geps = -1", "algorithm = delaunay", "n_total = 2",
                                      "domain = 0 0 0 1", "K = -0.1", "fac_init = 1.5",
                                      "output_interval = -2", "sizing = weird"])
    def test_validation(self, text):
        with pytest.raises((ValidationError, ParseError)):
            parse_config(text)

    def test_fac_geps_negative_is_validation_error(self):
        with pytest.raises(ValidationError):
            parse_config("fac_geps = -1")

    def test_overrides(self):
        cfg = parse_config("n_total = 10\n", overrides={"n_total": 50, "seed": None})
        assert cfg.n_total == 50 and cfg.seed == 0

    def test_auto_sizing_k(self):
        cfg = parse_config("sizing = auto K=0.05\n")
        assert cfg.sizing == "auto" and cfg.K == 0.05

    def test_fac_init_default(self):
        assert Config().resolved_fac_init() == 1.0
        assert Config(sizing="auto").resolved_fac_init() == 0.2
        assert Config(fac_init=0.5).resolved_fac_init() == 0.5

    def test_load_relative_contour(self, tmp_path):
        write_contour_file(tmp_path / "sq.txt", unit_square_contour().segments)
        (tmp_path / "run.cfg").write_text("shape = contour sq.txt\n")
        cfg = load_config(tmp_path / "run.cfg")
        assert cfg.build_shape()((0.5, 0.5)) == pytest.approx(-0.5)


class TestShapeGrammar:
    def test_primitives(self):
        assert isinstance(parse_shape("circle 0.5 0.5 0.4"), Circle)
        assert isinstance(parse_shape("rect 0 1 0 2"), Rectangle)

    def test_nested(self, tmp_path):
        write_contour_file(tmp_path / "c.txt", unit_square_contour().segments)
        s = parse_shape("difference(contour c.txt, circle 0.5 0.7 0.1)", tmp_path, (0, 1, 0, 1))
        assert isinstance(s, Combined) and s.op == "difference"
        assert isinstance(s.left, Contour)
        assert s((0.5, 0.7)) == pytest.approx(0.1)
        assert s((0.5, 0.3)) == pytest.approx(-0.3)

    def test_deep_nesting(self):
        s = parse_shape("union(intersection(rect 0 1 0 1, circle 0 0 1), circle 1 1 0.2)")
        assert s((1.0, 1.0)) == pytest.approx(-0.2)

    @pytest.mark.parametrize("text", ["", "circle 0 0", "triangle 0 0 1", "union(circle 0 0 1)",
                                      "union(circle 0 0 1, circle 1 1 1", "rect 0 1 0 1 extra",
                                      "circle a b c"])
    def test_errors(self, text):
        with pytest.raises(ParseError):
            parse_shape(text)

    def test_missing_contour_file(self, tmp_path):
        with pytest.raises(OSError):
            parse_shape("contour nope.txt", tmp_path)

    def test_sizing(self):
        assert parse_sizing("constant") == ("constant", {})
        assert parse_sizing("auto K=0.2") == ("auto", {"K": 0.2})
        kind, p = parse_sizing("linear 0.05 0.3 circle 0 0 0.5")
        assert kind == "linear" and p["A"] == 0.05 and p["B"] == 0.3
        with pytest.raises(ParseError):
            parse_sizing("linear 0.05")


class TestFiles:
    def test_single_triangle_mesh(self, tmp_path):
        pts = np.array([(0.0, 0.0), (1.0, 0.0), (0.1 + 0.2, 1 / 3)])
        path = tmp_path / "m.txt"
        write_mesh(path, pts, np.array([0, 1, 1]), np.array([[0, 1, 2]]))
        text = path.read_text()
        assert text.splitlines()[0] == "3 1"
        assert len(text.splitlines()) == 5
        p2, c2, t2 = read_mesh(path)
        assert np.array_equal(p2, pts)  # bit exact
        assert c2.tolist() == [0, 1, 1] and t2.tolist() == [[0, 1, 2]]

    def test_roundtrip_random(self, rng, tmp_path):
        pts = rng.random((50, 2)) * 1e3 - 17
        tris = rng.integers(0, 50, (20, 3))
        cat = rng.integers(0, 2, 50)
        write_mesh(tmp_path / "m.txt", pts, cat, tris)
        p2, c2, t2 = read_mesh(tmp_path / "m.txt")
        assert np.array_equal(p2, pts) and np.array_equal(c2, cat) and np.array_equal(t2, tris)

    def test_empty_mesh(self):
        assert format_mesh(np.zeros((0, 2)), [], np.zeros((0, 3), int)) == "0 0\n"
        svg = format_svg(np.zeros((0, 2)), np.zeros((0, 3), int), (0, 1, 0, 1))
        assert svg.startswith("<svg") and "<polygon" not in svg

    def test_svg(self):
        pts = np.array([(0.0, 0.0), (1.0, 0.0), (0.0, 1.0)])
        svg = format_svg(pts, [[0, 1, 2]], (0, 1, 0, 1), contour=[[0, 0, 1, 0]], width=100)
        assert '<polygon points="0.000,100.000 100.000,100.000 0.000,0.000"/>' in svg
        assert 'stroke="red"' in svg and "<line" in svg

    def test_stats(self, tmp_path):
        path = tmp_path / "s.txt"
        path.write_text(format_stats([(1.1, 1.2, 3.0), (1.05, 1.1, 2.0)], [1.0, 1.5], [1.0, 2.0]))
        hist, summary = read_stats(path)
        assert hist == [(1.1, 1.2, 3.0), (1.05, 1.1, 2.0)]
        assert list(summary) == SUMMARY_COLUMNS
        assert summary["count"] == 2
        assert summary["alpha_median"] == 1.25
        assert summary["pct_alpha_lt_1_2"] == 50.0
        assert summary["pct_alpha_lt_2"] == 100.0


def write_cfg(tmp_path, **kw):
    lines = {"n_total": 300, "shape": "circle 0.5 0.5 0.4", "algorithm": "hybrid", "seed": 3}
    lines.update(kw)
    path = tmp_path / "run.cfg"
    path.write_text("".join(f"{k} = {v}\n" for k, v in lines.items()))
    return path


class TestCli:
    def test_run(self, tmp_path, capsys):
        cfg = write_cfg(tmp_path)
        out = tmp_path / "out"
        assert main(["mesh", "--config", str(cfg), "--out", str(out)]) == 0
        assert {p.name for p in out.iterdir()} == {"mesh.txt", "mesh.svg", "mesh_stats.txt"}
        pts, cat, tris = read_mesh(out / "mesh.txt")
        assert len(pts) == 300 and len(tris) > 0
        _, summary = read_stats(out / "mesh_stats.txt")
        assert summary["count"] == len(tris)
        assert "triangles" in capsys.readouterr().out

    def test_snapshots(self, tmp_path):
        cfg = write_cfg(tmp_path, output_interval=5, n_total=100)
        out = tmp_path / "snap"
        assert main(["mesh", "--config", str(cfg), "--out", str(out)]) == 0
        snaps = sorted(p.name for p in out.glob("mesh_0*.txt"))
        assert snaps and snaps[0] == "mesh_000000.txt"

    def test_deterministic(self, tmp_path):
        cfg = write_cfg(tmp_path, algorithm="cvd")
        for d in ("a", "b"):
            assert main(["mesh", "--config", str(cfg), "--out", str(tmp_path / d),
                         "--ntotal", "200"]) == 0
        assert (tmp_path / "a/mesh.txt").read_bytes() == (tmp_path / "b/mesh.txt").read_bytes()

    def test_bad_config(self, tmp_path, capsys):
        path = tmp_path / "bad.cfg"
        path.write_text("nonsense = 1\n")
        assert main(["mesh", "--config", str(path)]) == 1
        err = capsys.readouterr().err
        assert "unknown key" in err and "nonsense" in err

    def test_missing_config(self, tmp_path, capsys):
        assert main(["mesh", "--config", str(tmp_path / "none.cfg")]) == 1
        assert "error" in capsys.readouterr().err


class TestEstimator:
    def test_fit(self):
        m = TriangularMesher(n_total=200, algorithm="dm", seed=1).fit()
        assert m.points_.shape == (200, 2)
        assert m.triangles_.shape[1] == 3
        assert m.quality()["count"] == len(m.triangles_)
        assert m.termination_reason_ in ("quality", "movement", "max_iter")

    def test_shape_object(self):
        m = TriangularMesher(n_total=150, shape=Rectangle(0.1, 0.9, 0.1, 0.9)).fit()
        assert np.all(m.points_ >= 0.1 - 1e-9) and np.all(m.points_ <= 0.9 + 1e-9)

    def test_params_and_clone(self):
        from sklearn.base import clone

        m = TriangularMesher(n_total=100, params={"dt": 0.1})
        assert m.make_config().dt == 0.1
        assert clone(m).get_params() == m.get_params()
        with pytest.raises(ValidationError):
            TriangularMesher(params={"nope": 1}).make_config()

    def test_unfitted(self):
        from sklearn.exceptions import NotFittedError

        with pytest.raises(NotFittedError):
            TriangularMesher().quality()
