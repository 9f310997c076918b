import math
import subprocess
import sys

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import stats

from dtrack.errors import ConfigError, InvalidPlayerId, ParseError
from dtrack.workload import (
    GENERATOR_ID,
    Distribution,
    SyntheticSource,
    TraceSource,
    exact_probabilities,
    load_trace,
    make_source,
    write_trace,
)

DISTS = [d.value for d in Distribution]


class TestExactProbabilities:
    @pytest.mark.parametrize("dist", DISTS)
    def test_single_player(self, dist):
        assert exact_probabilities(dist, 1) == (1.0,)

    def test_zipf_two_players(self):
        p = exact_probabilities("zipfian", 2)
        assert p[0] == pytest.approx(0.585786437626905, rel=1e-12)

    def test_exponential_three_players(self):
        p = exact_probabilities("exponential", 3)
        expected = (0.665240955774822, 0.244728471054798, 0.090030573170380)
        assert p == pytest.approx(expected, rel=1e-12)

    def test_gaussian_symmetric(self):
        p = np.array(exact_probabilities("gaussian", 16))
        assert p == pytest.approx(p[::-1], rel=1e-9)
        assert p.argmax() in (7, 8)

    @given(st.sampled_from(DISTS), st.integers(1, 300))
    def test_normalised(self, dist, k):
        p = exact_probabilities(dist, k)
        assert len(p) == k
        assert math.fsum(p) == pytest.approx(1.0, abs=1e-12)
        assert min(p) >= 0

    def test_bad_inputs(self):
        with pytest.raises(ConfigError):
            exact_probabilities("pareto", 4)
        with pytest.raises(ConfigError):
            exact_probabilities("uniform", 0)


class TestSampler:
    @pytest.mark.parametrize("dist", DISTS)
    def test_chi_square(self, dist):
        k, n = 16, 10**6
        src = SyntheticSource(dist, k, seed=11)
        ids = src.peek(n)
        counts = np.bincount(ids, minlength=k)
        p = np.array(exact_probabilities(dist, k))
        assert stats.chisquare(counts, p * n).pvalue > 0.001
        assert np.max(np.abs(counts / n - p)) <= 0.005

    @pytest.mark.parametrize("dist", DISTS)
    def test_deterministic(self, dist):
        a = SyntheticSource(dist, 16, seed=5).peek(5000)
        b = SyntheticSource(dist, 16, seed=5).peek(5000)
        c = SyntheticSource(dist, 16, seed=6).peek(5000)
        assert np.array_equal(a, b)
        assert not np.array_equal(a, c)

    @pytest.mark.parametrize("dist", DISTS)
    def test_independent_of_read_pattern(self, dist):
        whole = SyntheticSource(dist, 16, seed=3).peek(20000).copy()
        src = SyntheticSource(dist, 16, seed=3)
        parts = []
        for size in (1, 7, 4096, 333, 9000, 6563):
            parts.append(src.peek(size).copy())
            src.advance(size)
        assert np.array_equal(np.concatenate(parts), whole)
        assert src.consumed == 20000

    def test_same_across_processes(self):
        code = ("from dtrack.workload import SyntheticSource;"
                "print(SyntheticSource('gaussian', 16, 99).peek(200).tolist())")
        out = subprocess.run([sys.executable, "-c", code], capture_output=True, text=True, check=True)
        here = SyntheticSource("gaussian", 16, 99).peek(200).tolist()
        assert out.stdout.strip() == str(here)

    def test_ids_in_range(self):
        for dist in DISTS:
            for k in (1, 2, 3, 64):
                ids = SyntheticSource(dist, k, seed=1).peek(10000)
                assert ids.min() >= 0 and ids.max() < k

    def test_gaussian_acceptance(self):
        # [0, k) covers mean +/- 3 sd, so at most ~0.27% of draws are redrawn
        for k in (2, 3, 16, 1000):
            mean, sd = k / 2, k / 6
            accept = stats.norm.cdf(k, mean, sd) - stats.norm.cdf(0, mean, sd)
            assert accept >= 0.99
            assert 1 / accept <= 1.02

    def test_next_arrival_and_iteration(self):
        src = SyntheticSource("uniform", 4, seed=0)
        first = src.peek(3).tolist()
        assert [src.next_arrival() for _ in range(3)] == first
        trace = TraceSource([1, 0, 2])
        assert list(trace) == [1, 0, 2]
        assert trace.next_arrival() is None

    def test_metadata(self):
        src = SyntheticSource("Zipfian", 8, seed=4)
        assert src.generator == GENERATOR_ID
        assert src.distribution is Distribution.ZIPFIAN
        assert src.probabilities() == exact_probabilities("zipfian", 8)


class TestTraces:
    def test_round_trip(self, tmp_path):
        ids = np.random.default_rng(0).integers(0, 37, size=10**5)
        path = tmp_path / "big.trace"
        write_trace(path, ids, header="generated\nsecond line")
        src = load_trace(path)
        assert len(src) == 10**5
        assert src.k == int(ids.max()) + 1
        assert np.array_equal(src.peek(10**5), ids)

    def test_comments_and_blanks(self, tmp_path):
        path = tmp_path / "t.trace"
        path.write_text("# header\n\n1\n  0  \n# mid\n3\n")
        src = load_trace(path)
        assert src.peek(10).tolist() == [1, 0, 3]
        assert src.k == 4
        assert src.frequencies() == (1 / 3, 1 / 3, 0.0, 1 / 3)

    def test_parse_error_reports_line(self, tmp_path):
        path = tmp_path / "bad.trace"
        path.write_text("1\n2\nthree\n")
        with pytest.raises(ParseError) as info:
            load_trace(path)
        assert info.value.lineno == 3

    def test_negative_id(self, tmp_path):
        path = tmp_path / "neg.trace"
        path.write_text("1\n-2\n")
        with pytest.raises(InvalidPlayerId):
            load_trace(path)

    def test_id_beyond_k(self, tmp_path):
        path = tmp_path / "big.trace"
        path.write_text("1\n5\n")
        with pytest.raises(InvalidPlayerId):
            load_trace(path, k=4)
        assert load_trace(path, k=8).k == 8

    def test_empty_file(self, tmp_path):
        path = tmp_path / "empty.trace"
        path.write_text("# nothing\n")
        src = load_trace(path)
        assert len(src) == 0
        with pytest.raises(ConfigError):
            src.frequencies()

    def test_missing_file(self, tmp_path):
        with pytest.raises(FileNotFoundError):
            load_trace(tmp_path / "nope.trace")

    def test_direct_validation(self):
        with pytest.raises(InvalidPlayerId):
            TraceSource([0, -1])
        with pytest.raises(InvalidPlayerId):
            TraceSource([0, 4], k=4)


class TestMakeSource:
    def test_exclusive(self, tmp_path):
        with pytest.raises(ConfigError):
            make_source()
        with pytest.raises(ConfigError):
            make_source("uniform", 4, trace=tmp_path / "x")
        with pytest.raises(ConfigError):
            make_source("uniform")

    def test_builds(self, tmp_path):
        assert isinstance(make_source("uniform", 4, seed=2), SyntheticSource)
        path = tmp_path / "t.trace"
        write_trace(path, [0, 1])
        assert isinstance(make_source(trace=path), TraceSource)
