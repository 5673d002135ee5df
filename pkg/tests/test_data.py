import math

import numpy as np
import pytest

from gmrfprox import GmrfPrior, ParseError, ShapeError, SolverTrace, TraceEntry
from gmrfprox.data import (
    TEXTURE_STENCILS,
    default_priors,
    generate_observation,
    make_basis,
    make_synthetic_instance,
    read_band_image,
    read_matrix_csv,
    read_trace_csv,
    write_band_image,
    write_matrix_csv,
    write_trace_csv,
)


def empirical_snr(Y, X):
    return 10 * np.log10(np.sum(X**2) / np.sum((Y - X) ** 2))


class TestObservation:
    def test_noise_free(self, rng):
        W = rng.uniform(size=(5, 3))
        H = rng.uniform(size=(3, 40))
        assert np.array_equal(generate_observation(W, H, math.inf, seed=0), W @ H)

    def test_snr_at_25_db(self, rng):
        W = rng.uniform(size=(5, 3))
        H = rng.uniform(size=(3, 64 * 64))
        Y = generate_observation(W, H, 25.0, seed=1)
        assert abs(empirical_snr(Y, W @ H) - 25.0) <= 0.2

    def test_deterministic(self, rng):
        W = rng.uniform(size=(4, 2))
        H = rng.uniform(size=(2, 10))
        a = generate_observation(W, H, 10.0, seed=3)
        assert np.array_equal(a, generate_observation(W, H, 10.0, seed=3))
        assert not np.array_equal(a, generate_observation(W, H, 10.0, seed=4))

    def test_shape_mismatch(self):
        with pytest.raises(ShapeError):
            generate_observation(np.ones((5, 3)), np.ones((2, 4)), 25.0, 0)


class TestSyntheticInstance:
    def test_default_instance(self):
        inst = make_synthetic_instance(3, 5, (64, 64), seed=0)
        assert inst.W.shape == (5, 3)
        assert inst.H_true.shape == (3, 4096)
        assert inst.Y.shape == (5, 4096)
        assert np.all(inst.W >= 0)
        ev = np.linalg.eigvalsh(inst.W.T @ inst.W)
        assert ev[-1] / ev[0] >= 100
        np.testing.assert_allclose(inst.H_true.min(axis=1), 0.0)
        np.testing.assert_allclose(inst.H_true.max(axis=1), 1.0)
        assert abs(empirical_snr(inst.Y, inst.W @ inst.H_true) - 25.0) <= 0.2
        assert [p.lam for p in inst.priors] == [0.05] * 3

    def test_twin_columns(self):
        W = make_basis(3, 5, np.random.default_rng(0))
        cos = W[:, 0] @ W[:, 1] / (np.linalg.norm(W[:, 0]) * np.linalg.norm(W[:, 1]))
        assert 0.99 <= cos < 1.0

    @pytest.mark.parametrize("seed", [0, 1, 2, 3])
    def test_ill_conditioned_for_several_seeds(self, seed):
        inst = make_synthetic_instance(3, 5, (16, 16), seed=seed)
        ev = np.linalg.eigvalsh(inst.W.T @ inst.W)
        assert ev[-1] / ev[0] >= 100

    def test_deterministic(self):
        a = make_synthetic_instance(3, 5, (16, 16), seed=7)
        b = make_synthetic_instance(3, 5, (16, 16), seed=7)
        for name in ("W", "H_true", "Y"):
            assert np.array_equal(getattr(a, name), getattr(b, name))

    def test_noise_free_sentinel(self):
        inst = make_synthetic_instance(3, 5, (8, 8), snr_db=math.inf, seed=1)
        assert np.array_equal(inst.Y, inst.W @ inst.H_true)

    def test_prior_count_mismatch(self):
        with pytest.raises(ShapeError):
            make_synthetic_instance(3, 5, (8, 8), priors=default_priors(2))

    def test_default_priors_cycle(self):
        priors = default_priors(4, lam=0.1)
        assert priors[3].kernel == priors[0].kernel
        assert len(TEXTURE_STENCILS) == 3
        assert all(isinstance(p, GmrfPrior) and p.lam == 0.1 for p in priors)


class TestMatrixCsv:
    def test_round_trip_bit_identical(self, tmp_path, rng):
        M = rng.standard_normal((5, 3)) * 10.0 ** rng.integers(-300, 300, (5, 3))
        path = tmp_path / "m.csv"
        write_matrix_csv(path, M)
        assert np.array_equal(read_matrix_csv(path), M)

    def test_scalar(self, tmp_path):
        path = tmp_path / "s.csv"
        path.write_text("3.5\n")
        assert read_matrix_csv(path).tolist() == [[3.5]]

    def test_empty(self, tmp_path):
        path = tmp_path / "e.csv"
        path.write_text("")
        with pytest.raises(ParseError):
            read_matrix_csv(path)

    def test_ragged_reports_line(self, tmp_path):
        path = tmp_path / "r.csv"
        path.write_text("1,2,3\n4,5\n")
        with pytest.raises(ParseError, match=":2:"):
            read_matrix_csv(path)

    def test_non_numeric_reports_line(self, tmp_path):
        path = tmp_path / "n.csv"
        path.write_text("1,2\n3,4\nx,6\n")
        with pytest.raises(ParseError, match=":3:"):
            read_matrix_csv(path)


class TestBandImage:
    def test_header_and_samples(self, tmp_path):
        path = tmp_path / "b.pgm"
        write_band_image(path, [0.0, 1.0, 0.5, 0.25], (2, 2))
        data = path.read_bytes()
        assert data.startswith(b"P5\n")
        assert b"\n2 2\n65535\n" in data
        samples = np.frombuffer(data[-8:], dtype=">u2").astype(int)
        assert np.all(np.abs(samples - [0, 65535, 32768, 16384]) <= 1)

    def test_round_trip_quantization(self, tmp_path, rng):
        h = rng.normal(3.0, 2.0, 12 * 7)
        path = tmp_path / "r.pgm"
        write_band_image(path, h, (12, 7))
        back, shape = read_band_image(path)
        assert shape.dims == (12, 7)
        assert np.max(np.abs(back - h)) <= (h.max() - h.min()) / 65535

    def test_constant_band(self, tmp_path):
        path = tmp_path / "c.pgm"
        write_band_image(path, np.full(6, 0.7), (2, 3))
        data = path.read_bytes()
        assert b"degenerate=1" in data
        assert np.all(np.frombuffer(data[-12:], dtype=">u2") == 0)
        back, _ = read_band_image(path)
        np.testing.assert_array_equal(back, 0.7)

    def test_plain_8bit_file(self, tmp_path):
        path = tmp_path / "p.pgm"
        path.write_bytes(b"P5\n# made elsewhere\n3 1\n255\n" + bytes([0, 128, 255]))
        values, shape = read_band_image(path)
        assert shape.dims == (1, 3)
        assert values.tolist() == [0.0, 128.0, 255.0]

    @pytest.mark.parametrize(
        "payload",
        [b"P2\n2 2\n255\n0 0 0 0", b"P5\n2 x\n255\n\0\0\0\0", b"P5\n2 2\n", b"P5\n2 2\n255\n\0"],
    )
    def test_malformed(self, tmp_path, payload):
        path = tmp_path / "bad.pgm"
        path.write_bytes(payload)
        with pytest.raises(ParseError):
            read_band_image(path)


class TestTraceCsv:
    def test_round_trip(self, tmp_path):
        trace = SolverTrace("fista")
        trace.append(TraceEntry(1, 0.001, 12.5, 0.3, 0.1, None))
        trace.append(TraceEntry(2, 0.0021, 11.0, 0.1, 0.05, 0.0025))
        path = tmp_path / "t.csv"
        write_trace_csv(path, trace)
        assert path.read_text().splitlines()[0] == "iter,elapsed_seconds,objective,rel_change,rel_err,nmse"
        back = read_trace_csv(path, "fista")
        assert back.entries == trace.entries

    def test_bad_header(self, tmp_path):
        path = tmp_path / "t.csv"
        path.write_text("iter,time\n1,0.1\n")
        with pytest.raises(ParseError):
            read_trace_csv(path)
