import numpy as np
import pytest

from tractrlf.diffcore.tensor import Tape, backward
from tractrlf.env import TrackingSpace
from tractrlf.field.grid import GridSpec, SHField, TrackingMask
from tractrlf.field.phantom import make_phantom
from tractrlf.schemas.phantom import PhantomConfig
from tractrlf.sh import PeakVolume

N_COEFF = 45


def pytest_addoption(parser):
    parser.addoption("--slow", action="store_true", default=False, help="run desk-scale end-to-end tests")


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: desk-scale end-to-end run (minutes)")


def pytest_collection_modifyitems(config, items):
    if config.getoption("--slow"):
        return
    skip = pytest.mark.skip(reason="needs --slow")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip)


def line_space(length: int = 16, width: int = 5, direction=(1.0, 0.0, 0.0)) -> TrackingSpace:
    """A straight slab along x with one known peak everywhere inside it."""
    spec = GridSpec(dims=(length, width, width))
    field = SHField(spec, np.zeros(spec.shape + (N_COEFF,)))
    voxels = np.zeros(spec.shape, dtype=bool)
    voxels[:, 1 : width - 1, 1 : width - 1] = True
    mask = TrackingMask(spec, voxels)
    peaks = np.zeros(spec.shape + (1, 3))
    peaks[voxels, 0] = direction
    return TrackingSpace(field, mask, PeakVolume(peaks, voxels.astype(np.int64)))


@pytest.fixture
def make_line_space():
    return line_space


@pytest.fixture(scope="session")
def small_phantom_cfg():
    return PhantomConfig(kind="straight", dims=12, n_streamlines=40, tube_radius_vox=2.0, aug_dilation_mm=2.0)


@pytest.fixture(scope="session")
def straight_phantom(small_phantom_cfg):
    return make_phantom("straight", GridSpec.cube(12), 7, small_phantom_cfg)


@pytest.fixture(scope="session")
def crossing_phantom(small_phantom_cfg):
    cfg = small_phantom_cfg.model_copy(update={"kind": "crossing"})
    return make_phantom("crossing", GridSpec.cube(16), 7, cfg)


def numeric_grad(loss_fn, t, h: float = 1e-5) -> np.ndarray:
    """Central differences of a scalar loss_fn() w.r.t. the data of tensor t."""
    grad = np.zeros_like(t.data)
    flat = t.data.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + h
        up = loss_fn().item()
        flat[i] = orig - h
        down = loss_fn().item()
        flat[i] = orig
        grad.reshape(-1)[i] = (up - down) / (2.0 * h)
    return grad


def rel_error(a, b) -> float:
    a, b = np.asarray(a), np.asarray(b)
    return float(np.linalg.norm(a - b) / max(np.linalg.norm(a) + np.linalg.norm(b), 1e-12))


def check_gradients(loss_fn, tensors, tol: float = 1e-4) -> None:
    for t in tensors:
        t.grad = None
    with Tape() as tape:
        loss = loss_fn()
    backward(tape, loss)
    analytic = [np.zeros_like(t.data) if t.grad is None else t.grad.copy() for t in tensors]
    for t, a in zip(tensors, analytic):
        t.grad = None
        n = numeric_grad(loss_fn, t)
        assert rel_error(a, n) < tol, f"{t.name or 'tensor'}: rel error {rel_error(a, n):.2e}"


@pytest.fixture
def grad_check():
    return check_gradients


@pytest.fixture
def workdir(tmp_path, monkeypatch):
    for var in ("TRLF_THREADS", "TRLF_RNG_SEED", "TRLF_WORKDIR"):
        monkeypatch.delenv(var, raising=False)
    return tmp_path / "work"
