import numpy as np
import pytest

from sdir.model import GeneratorSpec, NetworkModel, generate_network


def chain_model(**overrides):
    """Two nodes, node 0 infects node 1 with weight 0.3; node 0 starts infected."""
    params = dict(
        B=[[0.0, 0.0], [0.3, 0.0]],
        alpha=[1.0, 1.0],
        omega=[0.0, 0.0],
        delta=[0.5, 0.5],
        delta_prime=[0.5, 0.5],
        x0=[1.0, 0.0],
    )
    params.update(overrides)
    return NetworkModel(**params)


def star_model(betas=(0.4, 0.3, 0.2)):
    """Outward star: hub 0 infected, leaf i reached with weight betas[i-1]."""
    n = len(betas) + 1
    B = np.zeros((n, n))
    for leaf, b in enumerate(betas, start=1):
        B[leaf, 0] = b
    return NetworkModel(
        B=B,
        alpha=np.full(n, 0.7),
        omega=np.full(n, 0.2),
        delta=np.full(n, 0.4),
        delta_prime=np.full(n, 0.6),
        x0=np.eye(n)[0],
    )


def random_model(seed, n=8, p=0.3, **spec):
    spec.setdefault("seeds", 1)
    spec.setdefault("delayed_seeds", 1)
    return generate_network(GeneratorSpec(n=n, p=p, **spec), seed)


@pytest.fixture
def chain():
    return chain_model()


@pytest.fixture
def star():
    return star_model()


def pytest_configure(config):
    config._acceptance_lines = []


def pytest_terminal_summary(terminalreporter, config):
    lines = getattr(config, "_acceptance_lines", [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)


@pytest.fixture
def criterion(request):
    """Record one PASS/FAIL line for the acceptance summary."""
    lines = request.config._acceptance_lines

    def record(name, ok, detail=""):
        line = f"[{'PASS' if ok else 'FAIL'}] {name}: {detail}"
        lines.append(line)
        print(line)
        return ok

    return record
