import numpy as np
import pytest
from hypothesis import given, strategies as st

from mfdlr.burst import Burst, iq_imbalance
from mfdlr.emitter_sim import (FINGERPRINT_RANGES, DeviceFingerprint, capture_stream, detect_rising_edge,
                               emit_burst, extract_burst, make_population, payload, rrc_taps,
                               turn_on_envelope)
from mfdlr.errors import BoundsError, InvalidInputError, InvalidPopulationError

FIELDS = list(FINGERPRINT_RANGES)


def _row(fp):
    return np.array([getattr(fp, f) for f in FIELDS])


class TestPopulation:
    def test_twenty_devices_pairwise_distinct(self):
        pop = make_population(20, 1.0, 7)
        assert len(pop) == 20
        rows = np.stack([_row(fp) for fp in pop.fingerprints])
        for a in range(20):
            for b in range(a + 1, 20):
                assert np.any(rows[a] != rows[b])

    def test_deterministic(self):
        assert [fp.to_dict() for fp in make_population(2, 1.0, 7).fingerprints] == \
            [fp.to_dict() for fp in make_population(2, 1.0, 7).fingerprints]

    def test_distinct_seeds_differ(self):
        assert make_population(2, 1.0, 1)[0].to_dict() != make_population(2, 1.0, 2)[0].to_dict()

    def test_half_separation_stays_in_half_range(self):
        pop = make_population(5, 0.5, 3)
        for fp in pop.fingerprints:
            for name, (lo, hi) in FINGERPRINT_RANGES.items():
                mid, half = (lo + hi) / 2, (hi - lo) / 2
                assert abs(getattr(fp, name) - mid) <= 0.5 * half

    def test_ids_contiguous(self):
        assert [fp.device_id for fp in make_population(6, 1.0, 0).fingerprints] == list(range(6))

    @pytest.mark.parametrize("count,sep", [(1, 1.0), (0, 1.0), (5, 0.0), (5, 1.5)])
    def test_invalid(self, count, sep):
        with pytest.raises(InvalidPopulationError):
            make_population(count, sep, 0)


class TestFingerprint:
    @pytest.mark.parametrize("kw", [{"transient_tau": 0.0}, {"transient_ring_amp": 1.0},
                                    {"transient_ring_amp": -0.1}, {"pa_a3": 0.9, "pa_a5": 0.1}])
    def test_invariants(self, kw):
        with pytest.raises(InvalidInputError):
            DeviceFingerprint(0, **kw)


class TestEmission:
    def test_identity_fingerprint_returns_payload(self):
        b = emit_burst(DeviceFingerprint(0), 11, 256)
        np.testing.assert_allclose(b.samples, payload(11, 256), rtol=0, atol=1e-12)

    def test_cfo_only(self):
        fp = DeviceFingerprint(0, cfo_ppm=12.5)
        n = np.arange(512)
        expected = payload(3, 512) * np.exp(2j * np.pi * fp.cfo_cycles * n)
        np.testing.assert_allclose(emit_burst(fp, 3, 512).samples, expected, atol=1e-12)

    def test_cfo_cycles_value(self):
        # 10 ppm of 2.437 GHz at 100 MS/s
        assert DeviceFingerprint(0, cfo_ppm=10.0).cfo_cycles == pytest.approx(24370.0 / 100e6, rel=1e-12)

    def test_envelope_formula(self):
        fp = DeviceFingerprint(0, transient_tau=20.0, transient_ring_freq=0.05, transient_ring_amp=0.2)
        n = np.arange(1, 101)
        d = np.exp(-n / 20.0)
        np.testing.assert_allclose(turn_on_envelope(fp, 100),
                                   (1 - d) * (1 + 0.2 * np.cos(2 * np.pi * 0.05 * n) * d), rtol=1e-14)

    def test_pa_polynomial_shape(self):
        # PA alone (no rescale needed when steady-state power is restored) keeps phase
        fp = DeviceFingerprint(0, pa_a3=0.1)
        x = payload(5, 256)
        y = emit_burst(fp, 5, 256).samples
        np.testing.assert_allclose(np.angle(y), np.angle(x), atol=1e-12)
        ratio = np.abs(y) / np.abs(x)
        expected = 1 + 0.1 * np.abs(x) ** 2
        np.testing.assert_allclose(ratio / ratio[0], expected / expected[0], rtol=1e-10)

    def test_tx_iq_imbalance_applied(self):
        fp = DeviceFingerprint(0, tx_iq_gain=1.5, tx_iq_phase_deg=0.8)
        np.testing.assert_allclose(emit_burst(fp, 9, 128).samples,
                                   iq_imbalance(payload(9, 128), 1.5, 0.8), atol=1e-12)

    def test_payload_seeds_differ_and_repeat(self):
        fp = make_population(3, 1.0, 1)[2]
        a, b = emit_burst(fp, 1), emit_burst(fp, 2)
        assert not np.array_equal(a.samples, b.samples)
        np.testing.assert_array_equal(a.samples, emit_burst(fp, 1).samples)
        assert a.label == 2 and len(a) == 1024

    def test_short_length_rejected(self):
        with pytest.raises(InvalidInputError):
            emit_burst(DeviceFingerprint(0), 0, 63)

    def test_steady_state_power(self):
        for fp in make_population(20, 1.0, 42).fingerprints:
            for seed in range(3):
                b = emit_burst(fp, seed)
                start = int(np.ceil(5 * fp.transient_tau))
                assert abs(np.mean(np.abs(b.samples[start:]) ** 2) - 1.0) < 0.05

    def test_mean_signature_variance_shrinks_as_one_over_k(self):
        fp = make_population(4, 1.0, 5)[1]
        bursts = np.stack([emit_burst(fp, s).samples for s in range(1600)])
        reference = bursts[:1200].mean(axis=0)
        pool = bursts[1200:]

        def err(k):
            groups = pool[: (400 // k) * k].reshape(-1, k, pool.shape[1]).mean(axis=1)
            return np.mean(np.abs(groups - reference) ** 2)

        ratio = err(10) / err(40)
        assert 2.5 < ratio < 6.0

    def test_average_signatures_separable(self):
        pop = make_population(20, 1.0, 42)
        sigs = np.stack([np.mean([emit_burst(fp, s).samples for s in range(600)], axis=0)
                         for fp in pop.fingerprints])
        d = np.linalg.norm(sigs[:, None, :] - sigs[None, :, :], axis=-1)
        assert np.all(d[~np.eye(20, dtype=bool)] > 0)

    def test_rrc_unit_power_normalization(self):
        h = rrc_taps()
        assert np.sum(h ** 2) == pytest.approx(4.0, rel=1e-12)
        assert np.argmax(h) == (h.size - 1) // 2

    @given(st.integers(0, 2**32), st.integers(64, 400))
    def test_emit_deterministic(self, seed, length):
        fp = make_population(2, 1.0, 0)[1]
        a, b = emit_burst(fp, seed, length), emit_burst(fp, seed, length)
        assert len(a) == length
        np.testing.assert_array_equal(a.samples, b.samples)


class TestEdgeDetection:
    def test_clean_edge(self):
        stream = np.zeros(1600, dtype=complex)
        stream[500:] = np.exp(1j * np.linspace(0, 40, 1100))
        idx = detect_rising_edge(stream, 10.0)
        assert 500 <= idx <= 516

    def test_all_zero_not_found(self):
        assert detect_rising_edge(np.zeros(512, dtype=complex), 10.0) is None

    def test_empty_stream(self):
        with pytest.raises(InvalidInputError):
            detect_rising_edge(np.array([], dtype=complex), 10.0)

    def test_bad_threshold(self):
        with pytest.raises(InvalidInputError):
            detect_rising_edge(np.ones(100, dtype=complex), 0.0)

    def test_noisy_edge_monte_carlo(self):
        hits = 0
        for trial in range(1000):
            rng = np.random.default_rng([77, trial])
            stream = np.zeros(1200, dtype=complex)
            stream[500:] = np.exp(2j * np.pi * rng.uniform(size=700))
            noise = np.sqrt(0.01 / 2) * (rng.standard_normal(1200) + 1j * rng.standard_normal(1200))
            idx = detect_rising_edge(stream + noise, 10.0)
            hits += idx is not None and 484 <= idx <= 532
        assert hits >= 990

    def test_capture_stream_edge_near_lead(self):
        fp = make_population(2, 1.0, 0)[0]
        stream = capture_stream(fp, 1, 1024, 128, 60.0, np.random.default_rng(0))
        assert stream.shape == (128 + 1024 + 32,)
        assert 128 <= detect_rising_edge(stream, 10.0) <= 128 + 16


class TestExtract:
    def test_slices(self):
        ramp = np.arange(2048).astype(complex)
        np.testing.assert_array_equal(extract_burst(ramp, 0, 1024).samples, ramp[:1024])
        np.testing.assert_array_equal(extract_burst(ramp, 1024, 1024).samples, ramp[1024:])

    @pytest.mark.parametrize("start", [500, -1])
    def test_out_of_range(self, start):
        with pytest.raises(BoundsError):
            extract_burst(np.zeros(1000, dtype=complex), start, 1024)

    def test_burst_container(self):
        b = Burst(np.array([3 + 4j, 0]))
        assert b.energy == 25.0 and b.power == 12.5
        with pytest.raises(ValueError):
            Burst(np.zeros((2, 2)))
