import numpy as np
import pytest

import stoloc as sl


@pytest.fixture
def criterion_report(request):
    """Print one pass/fail line per acceptance criterion on the live
    terminal (past pytest's output capture), then assert."""
    reporter = request.config.pluginmanager.get_plugin("terminalreporter")

    def _report(name, passed, detail):
        line = f"[{'PASS' if passed else 'FAIL'}] {name}: {detail}"
        if reporter is not None:
            reporter.write_line(line)
        else:
            print(line)
        assert passed, f"{name}: {detail}"

    return _report


@pytest.fixture(scope="session")
def rademacher():
    return sl.Prior.discrete([-1.0, 1.0], [0.5, 0.5])


@pytest.fixture(scope="session")
def three_point():
    return sl.Prior.discrete([-1.0, 0.0, 1.0], [0.25, 0.5, 0.25],
                             normalize=True)


@pytest.fixture(scope="session")
def skewed_two_atom():
    # non-symmetric two-atom prior with unit second moment
    return sl.Prior.discrete([-0.5, 1.5], [0.6, 0.4], normalize=True)


@pytest.fixture(scope="session")
def skewed_three_atom():
    return sl.Prior.discrete([-1.0, 0.3, 2.0], [0.3, 0.45, 0.25],
                             normalize=True)


@pytest.fixture(scope="session")
def gaussian_mixture():
    return sl.Prior.from_config({
        "type": "continuous", "potential": "gaussian_mixture",
        "weights": [0.5, 0.5], "means": [-1.2, 1.2], "stds": [0.35, 0.35],
        "normalize": True})


@pytest.fixture(scope="session")
def double_well():
    return sl.Prior.from_config({
        "type": "continuous", "potential": "double_well",
        "height": 1.0, "wells": 1.2, "normalize": True})


def mc_mmse(prior, gamma, n_samples, seed, chunk=4000):
    """Monte-Carlo oracle for the channel risk, independent of the
    quadrature path (samples (Theta, G), denoises, averages the squared
    error). Returns (estimate, standard error)."""
    rng = np.random.default_rng(seed)
    th = prior.sample(n_samples, rng)
    z = gamma * th + np.sqrt(gamma) * rng.standard_normal(n_samples)
    sq = np.empty(n_samples)
    for i in range(0, n_samples, chunk):
        ev = sl.denoise(prior, z[i:i + chunk], gamma)
        sq[i:i + chunk] = (th[i:i + chunk] - ev.mean) ** 2
    return float(sq.mean()), float(sq.std() / np.sqrt(n_samples))
