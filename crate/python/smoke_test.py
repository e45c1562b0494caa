#!/usr/bin/env python3
"""Smoke test for the nrirls_py extension module.

Builds nothing itself: run `cargo build -p nrirls-python --release` first.
The compiled cdylib is copied next to a temp directory under the importable
name, then a handful of end-to-end checks run against it.
"""

import math
import shutil
import sys
import tempfile
from pathlib import Path

REPO = Path(__file__).resolve().parent.parent


def import_module():
    candidates = [
        REPO / "target" / "release" / "libnrirls_py.so",
        REPO / "target" / "debug" / "libnrirls_py.so",
        REPO / "target" / "release" / "libnrirls_py.dylib",
        REPO / "target" / "debug" / "libnrirls_py.dylib",
    ]
    built = next((p for p in candidates if p.exists()), None)
    if built is None:
        sys.exit(
            "extension not built; run `cargo build -p nrirls-python --release` first"
        )
    tmp = Path(tempfile.mkdtemp(prefix="nrirls_py_"))
    shutil.copy(built, tmp / "nrirls_py.so")
    sys.path.insert(0, str(tmp))
    import nrirls_py

    return nrirls_py


def main():
    m = import_module()

    # Functional identities: the energy at the minimizing weights equals the
    # smoothed residual.
    r = [3.0, -4.0, 0.5]
    eps, p = 0.25, 1.3
    w = m.optimal_weights(r, eps, p)
    j = m.energy(r, w, eps, p)
    f = m.smoothed_residual(r, eps, p)
    assert abs(j - f) <= 1e-10 * (1 + f), (j, f)
    assert m.update_epsilon([0.5, 2.0], 1.0, 1e-8) == 0.5

    # Error-recursion constants, frozen arithmetic.
    mu, nu = m.mu_nu(1.0, 2, 1.0, 80.0)
    assert abs(mu - 0.5) < 1e-12 and abs(nu - 0.475) < 1e-12

    # Toy problem: multistart lands at the global minimizer's residual.
    toy = m.Problem.simple_1d(y=(0.0, 0.9), p=1.3)
    opts = m.IrlsOptions(p=1.3, max_outer_iters=300)
    report = toy.solve(opts, [1.0])
    assert report.termination in {
        "eps_zero",
        "eps_below_floor",
        "stalled",
        "max_iters",
    }
    eps_trace = report.eps_trace
    assert all(b <= a for a, b in zip(eps_trace, eps_trace[1:]))
    energy = report.energy_trace
    assert all(b <= a + 1e-12 * (1 + abs(a)) for a, b in zip(energy, energy[1:]))

    # Sparse phase retrieval via the greedy harness, sign-invariant success.
    pr = m.Problem.phase_retrieval(n=16, m=10, k=1, kappa=1.0, p=1.0, seed=7)
    assert pr.dim_in == 16 and pr.dim_out == 10
    result = pr.greedy_recover(
        m.IrlsOptions(p=1.0, omega=100.0), max_sparsity=1, num_starts=3, seed=1
    )
    assert result["success"], result
    assert result["support"] == pr.support, (result["support"], pr.support)
    err = m.recovery_error(result["estimate"], pr.x_star, sign_invariant=True)
    assert err <= 0.01, err

    # Restricted solve on the true support of a perturbed sensing instance.
    rip = m.Problem.perturbed_rip(n=16, m=10, k=2, rho=0.5, p=1.0, seed=3)
    best = rip.multistart_solve(
        m.IrlsOptions(p=1.0), num_starts=2, radius=0.05, seed=2, support=rip.support
    )
    padded = m.pad_support(best.final_x, rip.support, 16)
    rel = m.recovery_error(padded, rip.x_star, sign_invariant=False)
    assert rel <= 0.01, rel

    # Problem files round-trip through text.
    text = pr.to_text()
    back = m.Problem.from_text(text)
    assert back.y == pr.y and back.support == pr.support

    # Jacobian sanity on the toy map: (1, 2x) at x = 1.
    jac = toy.jacobian([1.0])
    assert abs(jac[0][0] - 1.0) < 1e-12 and abs(jac[1][0] - 2.0) < 1e-12

    # Coercivity bounds of the toy family at p = 1: alpha >= 1, beta <= 3.
    alpha, beta = toy.bcc_estimate(p=1.0, num_samples=200, seed=5)
    assert alpha >= 1.0 - 1e-12 and beta <= 3.0 + 1e-12, (alpha, beta)

    print("smoke test: OK")
    return 0


if __name__ == "__main__":
    sys.exit(main())
