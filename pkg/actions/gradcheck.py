"""
Gradient check action for the DAN simulator
"""

import time

from .base import BaseAction, EXIT_OK, EXIT_RUNTIME
from ynet_forecaster import tiny_model_gradcheck

TOLERANCE = 1e-4


class GradcheckAction(BaseAction):
    """Action to compare backpropagated gradients of a tiny model with central differences"""

    def run(self, h=1e-5, seed=0):
        print("🚀 DAN Simulator - Gradient Check")
        print("=" * 40)
        return self._run_guarded(h=h, seed=seed)

    def _execute(self, h=1e-5, seed=0):
        print(f"🔬 Tiny YIdentityNet (N=4, T=6, C'=3, L=2, H=2), h={h}, seed={seed}")
        started = time.perf_counter()
        error = tiny_model_gradcheck(h=h, seed=seed)
        elapsed = time.perf_counter() - started
        print(f"⏱️  {elapsed:.1f}s")
        if error < TOLERANCE:
            print(f"✅ Max relative error {error:.3g} < {TOLERANCE:g}")
            return EXIT_OK
        print(f"❌ Max relative error {error:.3g} >= {TOLERANCE:g}")
        return EXIT_RUNTIME
