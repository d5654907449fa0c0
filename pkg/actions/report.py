"""
Report action for the DAN simulator
Summarizes the metrics.csv of a finished run
"""

from pathlib import Path
from typing import Any, Dict

import pandas as pd

from .base import BaseAction, EXIT_OK
from errors import ParseError
from sim_harness import ARTIFACTS, METRIC_COLUMNS, MetricsReport


def summarize_metrics(frame: pd.DataFrame) -> Dict[str, Any]:
    """Run-level summary of a per-epoch metrics frame"""
    missing = [c for c in METRIC_COLUMNS if c not in frame.columns]
    if missing:
        raise ParseError(f"metrics file lacks columns {missing}")
    if frame.empty:
        return {"epochs": 0}

    first, last = frame.iloc[0], frame.iloc[-1]
    trained = frame[frame["forecast_trained"] == 1]
    return {
        "epochs": len(frame),
        "ticks": int(last["tick"]),
        "chain_height": int(last["chain_height"]),
        "blocks_finalized": int(frame["blocks_finalized"].sum()),
        "mean_finalization_rate": float(frame["finalization_rate"].mean()),
        "violations": int(frame["violations"].sum()),
        "ydr_first": float(first["ydr_total"]),
        "ydr_last": float(last["ydr_total"]),
        "conservation_ok": bool((frame["conservation_ok"] == 1).all()),
        "gini_last": float(last["gini"]),
        "entropy_last": float(last["entropy"]),
        "game_classes": frame["game_class"].value_counts().sort_index().to_dict(),
        "ponzi_epochs": int(frame["ponzi_suspect"].sum()),
        "transactions": int(frame["transactions"].sum()),
        "burned": int(frame["burned"].sum()),
        "reinstated": int(frame["reinstated"].sum()),
        "forecast_epochs": len(trained),
        "forecaster_mse": float(trained["forecaster_mse"].mean()) if len(trained) else None,
        "baseline_mse": float(trained["baseline_mse"].mean()) if len(trained) else None,
    }


class ReportAction(BaseAction):
    """Action to print a summary of a run directory"""

    def run(self, run_dir=None):
        print("🚀 DAN Simulator - Report")
        print("=" * 40)
        return self._run_guarded(run_dir=run_dir)

    def _execute(self, run_dir=None):
        path = Path(run_dir) / ARTIFACTS["metrics"]
        if not path.exists():
            raise ParseError(f"{path} does not exist")
        summary = summarize_metrics(MetricsReport.read_csv(path))
        if summary["epochs"] == 0:
            print("ℹ️  No epochs recorded")
            return EXIT_OK

        print(f"📊 {summary['epochs']} epochs, {summary['ticks']} ticks")
        print(f"⛓️  Chain height {summary['chain_height']}, "
              f"mean finalization rate {summary['mean_finalization_rate']:.3f}, "
              f"{summary['violations']} violations")
        print(f"💰 YDR total {summary['ydr_first']:.6g} -> {summary['ydr_last']:.6g}"
              f" (conservation {'ok' if summary['conservation_ok'] else 'BROKEN'})")
        print(f"⚖️  Gini {summary['gini_last']:.4f}, entropy {summary['entropy_last']:.4f}")
        classes = ", ".join(f"{k}: {v}" for k, v in summary["game_classes"].items())
        print(f"🎲 Game classes by epoch: {classes}")
        if summary["ponzi_epochs"]:
            print(f"⚠️  Ponzi-suspect epochs: {summary['ponzi_epochs']}")
        print(f"🤝 {summary['transactions']} transactions, "
              f"{summary['burned']} burned, {summary['reinstated']} reinstated")
        if summary["forecast_epochs"]:
            print(f"📈 Forecaster MSE {summary['forecaster_mse']:.6g} vs baseline "
                  f"{summary['baseline_mse']:.6g} over {summary['forecast_epochs']} epochs")
        return EXIT_OK
