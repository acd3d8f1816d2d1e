import sys
import time

import numpy as np

from jumpput import settings
from core.fundsol import frozen_exponents
from core.models import JumpMeasure, MarketModel, VolatilityModel
from core.solver import solve

BOUNDARY_TOL = 1e-3
VALUE_TOL = 2e-3


def verify_system():
    print("Setting up the no-jump reference model...")
    model = MarketModel(VolatilityModel.constant(0.2), rate=0.05, lam=0.0, jumps=JumpMeasure.identity(), strike=1.0)
    beta_minus, _ = frozen_exponents(0.2, model.mu, model.rho)
    exact_boundary = model.strike * beta_minus / (beta_minus - 1.0)
    print(f"Closed-form boundary: {exact_boundary:.6f}")

    print("\nSolving...")
    started = time.perf_counter()
    sol = solve(model)
    elapsed = time.perf_counter() - started
    print(f"Solver boundary: {sol.boundary:.6f} ({elapsed:.2f}s)")

    x = np.linspace(0.5, 2.0, 151)
    exact = np.where(x <= exact_boundary, model.strike - x,
                     (model.strike - exact_boundary) * (x / exact_boundary) ** beta_minus)
    error = np.max(np.abs(sol.value(x) - exact) / exact)
    print(f"Relative sup error on [0.5, 2]: {error:.3e}")

    if abs(sol.boundary - exact_boundary) <= BOUNDARY_TOL and error <= VALUE_TOL:
        print("SUCCESS: solver reproduces the closed-form perpetual put.")
        return True
    print("FAILURE: solver disagrees with the closed-form perpetual put.")
    return False


if __name__ == "__main__":
    settings.configure_logging()
    sys.exit(0 if verify_system() else 1)
