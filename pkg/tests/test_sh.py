import math

import numpy as np
import pytest

from tractrlf.core.errors import ShapeError, UsageError
from tractrlf.sh import (
    default_sphere,
    eval_basis,
    eval_basis_matrix,
    extract_peaks,
    fodf_amplitude,
    peak_volume,
    separate,
    sh_indices,
    sphere_basis,
)

Y00 = 1.0 / (2.0 * math.sqrt(math.pi))


def lobes(*peaks, sharpness=16) -> np.ndarray:
    """SH coefficients of sum_p |u . p|^k fitted on the default sphere."""
    basis = sphere_basis(8)
    amp = sum(np.abs(basis.dirs @ np.asarray(p, dtype=np.float64)) ** sharpness for p in peaks)
    return basis.fit(amp)


def axial_angle_deg(u, v) -> float:
    c = abs(float(np.dot(u, v))) / (np.linalg.norm(u) * np.linalg.norm(v))
    return math.degrees(math.acos(min(c, 1.0)))


def test_basis_lengths():
    assert eval_basis(0, (0.0, 0.0, 1.0)).tolist() == pytest.approx([Y00])
    assert len(eval_basis(8, (1.0, 0.0, 0.0))) == 45
    assert len(eval_basis(4, (0.0, 1.0, 0.0))) == 15
    assert sh_indices(2) == [(0, 0), (2, -2), (2, -1), (2, 0), (2, 1), (2, 2)]


def test_basis_rejects_odd_order_and_non_unit():
    with pytest.raises(UsageError):
        eval_basis(3, (0.0, 0.0, 1.0))
    with pytest.raises(UsageError):
        eval_basis(8, (0.0, 0.0, 2.0))


def test_basis_matches_closed_form_zonal_term():
    rng = np.random.default_rng(0)
    dirs = rng.normal(size=(50, 3))
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    got = eval_basis_matrix(2, dirs)[:, 3]
    z = dirs[:, 2]
    assert np.allclose(got, math.sqrt(5.0 / (16.0 * math.pi)) * (3.0 * z * z - 1.0), atol=1e-10)


def test_basis_is_antipodally_symmetric():
    rng = np.random.default_rng(1)
    dirs = rng.normal(size=(20, 3))
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    assert np.allclose(eval_basis_matrix(8, dirs), eval_basis_matrix(8, -dirs), atol=1e-12)


def test_sphere_has_724_symmetric_directions():
    sphere = default_sphere()
    assert sphere.vertices.shape == (724, 3)
    assert np.allclose(np.linalg.norm(sphere.vertices, axis=1), 1.0)
    assert np.allclose(sphere.vertices[:362], -sphere.vertices[362:])
    # every direction is joined to its neighbours
    assert set(np.unique(sphere.edges)) == set(range(724))


def test_fodf_amplitude_constant_term():
    coeffs = np.zeros(45)
    coeffs[0] = 1.0
    for u in [(1.0, 0.0, 0.0), (0.0, 0.6, 0.8)]:
        assert fodf_amplitude(coeffs, u) == pytest.approx(Y00)


def test_fodf_amplitude_rejects_bad_length():
    with pytest.raises(ShapeError):
        fodf_amplitude(np.zeros(44), (1.0, 0.0, 0.0))


def test_fodf_amplitude_is_even():
    rng = np.random.default_rng(2)
    coeffs = rng.normal(size=45)
    u = np.array([0.3, -0.4, math.sqrt(0.75)])
    assert fodf_amplitude(coeffs, u) == pytest.approx(fodf_amplitude(coeffs, -u), abs=1e-12)


def test_fit_recovers_order8_coefficients():
    rng = np.random.default_rng(3)
    basis = sphere_basis(8)
    coeffs = rng.normal(size=45)
    back = basis.fit(basis.amplitudes(coeffs))
    assert np.linalg.norm(back - coeffs) / np.linalg.norm(coeffs) < 1e-8


def test_single_peak_is_recovered():
    p = np.array([1.0, 2.0, 2.0]) / 3.0
    peaks = extract_peaks(lobes(p))
    assert len(peaks) == 1
    assert axial_angle_deg(peaks.peaks[0], p) < 5.0
    assert peaks.peaks[0][2] > 0
    assert np.allclose(np.linalg.norm(peaks.peaks, axis=1), 1.0, atol=1e-6)


def test_sphere_argmax_near_planted_peak():
    p = np.array([0.0, 0.6, 0.8])
    basis = sphere_basis(8)
    amp = basis.amplitudes(lobes(p))
    assert axial_angle_deg(basis.dirs[int(np.argmax(amp))], p) < 5.0


def test_crossing_gives_two_orthogonal_peaks():
    peaks = extract_peaks(lobes((1.0, 0.0, 0.0), (0.0, 1.0, 0.0)))
    assert len(peaks) == 2
    assert abs(axial_angle_deg(peaks.peaks[0], peaks.peaks[1]) - 90.0) < 5.0
    assert peaks.amplitudes[0] >= peaks.amplitudes[1] >= 0.25 * peaks.amplitudes[0]


def test_isotropic_field_does_not_crash():
    coeffs = np.zeros(45)
    coeffs[0] = 1.0
    peaks = extract_peaks(coeffs)
    assert len(peaks) <= 1
    if len(peaks):
        assert np.allclose(peaks.amplitudes, peaks.amplitudes[0], atol=1e-9)


def test_non_positive_field_has_no_peaks():
    coeffs = np.zeros(45)
    coeffs[0] = -1.0
    assert len(extract_peaks(coeffs)) == 0


def test_peaks_invariant_to_positive_scaling():
    coeffs = lobes((0.0, 0.0, 1.0), (1.0, 0.0, 0.3))
    a = extract_peaks(coeffs)
    b = extract_peaks(4.0 * coeffs)
    assert np.array_equal(a.peaks, b.peaks)
    assert np.allclose(b.amplitudes, 4.0 * a.amplitudes)


def test_peaks_invariant_to_planted_sign():
    p = np.array([0.48, 0.6, 0.64])
    a = extract_peaks(lobes(p))
    b = extract_peaks(lobes(-p))
    assert np.allclose(a.peaks, b.peaks, atol=1e-9)


def test_n_max_caps_the_peak_count():
    coeffs = lobes((1.0, 0.0, 0.0), (0.0, 1.0, 0.0), (0.0, 0.0, 1.0))
    assert len(extract_peaks(coeffs, n_max=2)) == 2


def test_phantom_peaks_follow_the_bundle(straight_phantom):
    volume = peak_volume(straight_phantom.field, straight_phantom.gt_mask)
    for ijk in straight_phantom.gt_mask.indices()[::7]:
        found = volume.at(ijk)
        assert len(found) == 1
        assert axial_angle_deg(found[0], (1.0, 0.0, 0.0)) < 5.0


def test_crossing_phantom_overlap_peaks(crossing_phantom):
    overlap = np.argwhere(crossing_phantom.peaks_gt.counts == 2)
    for ijk in overlap[:: max(len(overlap) // 5, 1)]:
        found = extract_peaks(crossing_phantom.field.coeffs[tuple(ijk)])
        assert len(found) == 2
        assert abs(axial_angle_deg(found.peaks[0], found.peaks[1]) - 90.0) < 5.0


def test_separation_keeps_peaks_exactly_at_the_minimum_angle():
    s = math.sqrt(0.5)
    near = np.array([0.995, 0.0995, 0.0]) / np.linalg.norm([0.995, 0.0995, 0.0])
    dirs = np.array([[1.0, 0.0, 0.0], [s, s, 0.0], near])
    kept, values = separate(dirs, np.array([3.0, 2.0, 1.0]), 45.0)
    assert np.array_equal(kept, dirs[:2])
    assert values.tolist() == [3.0, 2.0]


def test_separation_is_axial():
    dirs = np.array([[0.0, 0.0, 1.0], [0.0, 0.1, -1.0]])
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    kept, _ = separate(dirs, np.array([2.0, 1.0]), 25.0)
    assert len(kept) == 1
