"""The ten acceptance criteria at their stated tolerances and time limits.

Each test prints one ``[PASS]``/``[FAIL]`` line; the lines are repeated in
the pytest terminal summary. Run directly with ``python3 tests/test_acceptance.py``
for the lines alone.
"""

import sys

import pytest

from limcom import verify

RESULTS = []

CHECKS = [
    (1, lambda: verify.check_boundary_structure(verify.BASELINE, 256)),
    (2, lambda: verify.check_infinite_horizon(verify.BASELINE, T=200.0, n_steps=2048)),
    (3, verify.check_laplace),
    (4, lambda: verify.check_duality_gradient(verify.BASELINE, 256, n_points=20)),
    (5, lambda: verify.check_fd_oracle(verify.BASELINE, 256, 400, 400)),
    (6, lambda: verify.check_monte_carlo(verify.BASELINE, n_paths=100_000, n_steps=600)),
    (7, lambda: verify.check_path_invariants(verify.BASELINE, n_paths=1000, n_steps=600)),
    (8, lambda: verify.check_first_best(verify.BASELINE)),
    (9, lambda: verify.check_homogeneity(verify.BASELINE, 256)),
    (10, lambda: verify.check_hjb(verify.BASELINE, 256, n_points=10)),
]


@pytest.mark.slow
@pytest.mark.parametrize("number, run", CHECKS, ids=[f"criterion_{n}" for n, _ in CHECKS])
def test_criterion(number, run):
    result = run()
    RESULTS.append(result.line())
    print(result.line())
    assert result.number == number
    assert result.passed, result.line()


if __name__ == "__main__":
    ok = True
    for _, run in CHECKS:
        r = run()
        print(r.line(), flush=True)
        ok &= r.passed
    sys.exit(0 if ok else 1)
