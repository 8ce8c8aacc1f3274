import io

import numpy as np
import pytest
from hypothesis import given, strategies as st

from cylfbm.fbm import TimeGrid, sample_paths
from cylfbm.functions import SampledFunction
from cylfbm.io import (RunConfig, parse_config, parse_floats, parse_rule, read_sampled, read_simple, read_table,
                       write_paths, write_sampled, write_table)

finite = st.floats(-1e12, 1e12, allow_nan=False, allow_subnormal=False)


class TestTables:
    @given(st.lists(st.tuples(finite, finite), min_size=1, max_size=20))
    def test_round_trip_is_exact(self, rows):
        buf = io.StringIO()
        write_table(buf, ["a", "b"], rows)
        header, data = read_table(io.StringIO(buf.getvalue()))
        assert header == ["a", "b"]
        np.testing.assert_array_equal(data, np.array(rows))

    @pytest.mark.parametrize("text", ["", "t,v\n1,x\n", "t,v\n1,2,3\n"])
    def test_bad_input(self, text):
        with pytest.raises(ValueError):
            read_table(io.StringIO(text))

    def test_paths_layout(self, tmp_path):
        P = sample_paths(TimeGrid(1.0, 4), 0.3, 3, 1)
        write_paths(tmp_path / "p.csv", P)
        header, data = read_table(tmp_path / "p.csv")
        assert header == ["t", "path_0", "path_1", "path_2"]
        np.testing.assert_array_equal(data[:, 0], P.grid.nodes)
        np.testing.assert_array_equal(data[:, 1:], P.paths.T)


class TestSampled:
    def test_jump_written_twice(self):
        g = TimeGrid(1.0, 4)
        f = SampledFunction(g, [0.0, 1.0, 2.0, 2.0, 2.0], left_limits=[0.0, 1.0, 1.0, 2.0, 2.0])
        buf = io.StringIO()
        write_sampled(buf, f)
        lines = buf.getvalue().splitlines()
        assert lines[0] == "t,v_0" and lines[3:5] == ["0.5,1", "0.5,2"]
        back = read_sampled(io.StringIO(buf.getvalue()))
        np.testing.assert_array_equal(back.values, f.values)
        np.testing.assert_array_equal(back.left_limits, f.left_limits)

    @given(st.lists(st.tuples(finite, finite, st.booleans()), min_size=2, max_size=12))
    def test_round_trip(self, cells):
        g = TimeGrid(2.0, len(cells) - 1)
        right = np.array([c[0] for c in cells])
        left = np.array([c[1] if c[2] else c[0] for c in cells])
        f = SampledFunction(g, right, left_limits=left)
        buf = io.StringIO()
        write_sampled(buf, f)
        back = read_sampled(io.StringIO(buf.getvalue()))
        np.testing.assert_array_equal(back.values, f.values)
        np.testing.assert_array_equal(back.left_limits, f.left_limits)

    @pytest.mark.parametrize("text", ["x,v\n0,1\n1,2\n", "t,v\n0.5,1\n1,2\n", "t,v\n0,1\n0.3,2\n1,3\n",
                                      "t,v\n0,1\n0.5,1\n0.5,2\n0.5,3\n1,1\n", "t,v\n0,1\n"])
    def test_rejects(self, text):
        with pytest.raises(ValueError):
            read_sampled(io.StringIO(text))

    def test_simple(self):
        s = read_simple(io.StringIO("start,end,x_0,x_1\n0,0.5,1,2\n0.5,1,3,4\n"))
        np.testing.assert_array_equal(s.breakpoints, [0, 0.5, 1])
        np.testing.assert_array_equal(s.pieces, [[1, 2], [3, 4]])
        with pytest.raises(ValueError):
            read_simple(io.StringIO("start,end,x_0\n0,0.4,1\n0.5,1,3\n"))


class TestRules:
    @pytest.mark.parametrize("text,expected", [
        ("q_k = 2*k^-0.5", 2 * np.arange(1, 5) ** -0.5),
        ("k^(-1)", 1.0 / np.arange(1, 5)),
        ("lambda_k = k^2", np.arange(1, 5) ** 2.0),
        ("1, 2, 3, 4, 5", [1, 2, 3, 4]),
        ("1 2 3 4", [1, 2, 3, 4]),
    ])
    def test_forms(self, text, expected):
        np.testing.assert_allclose(parse_rule(text, 4), expected, rtol=1e-15)

    def test_errors(self):
        with pytest.raises(ValueError):
            parse_rule("k^2")
        with pytest.raises(ValueError):
            parse_rule("1, 2", 3)
        with pytest.raises(ValueError):
            parse_floats(" ")


class TestConfig:
    def test_comments_and_case(self):
        cfg = parse_config(io.StringIO("# comment\nKind = diagonal  # inline\nweights = 1, 2\n"))
        assert cfg == {"Kind": "diagonal", "weights": "1, 2"}

    @given(verb=st.sampled_from(["fbm sample", "heat simulate"]),
           hurst=st.one_of(st.none(), st.floats(0.01, 0.99)),
           T=st.floats(1e-3, 1e3), n=st.integers(1, 10**6), seed=st.integers(0, 2**63 - 1),
           tol=st.dictionaries(st.sampled_from(["z", "kernel_rel", "brute_rel"]), st.floats(1e-12, 10.0)))
    def test_run_config_round_trip(self, verb, hurst, T, n, seed, tol):
        cfg = RunConfig(verb, hurst, T, n, seed=seed, output="out.csv", tolerances=tol)
        assert RunConfig.from_text(cfg.to_text()) == cfg

    def test_unknown_key(self):
        with pytest.raises(ValueError):
            RunConfig.from_text("verb = x\ncolour = red\n")
        with pytest.raises(ValueError):
            RunConfig.from_text("hurst = 0.3\n")
