"""
Run action for the DAN simulator
Runs a scenario end to end and exports its artifacts
"""

from pathlib import Path

from .base import BaseAction, EXIT_OK
from config import config
from scenario import load_scenario
from sim_harness import export, run


class RunScenarioAction(BaseAction):
    """Action to run a scenario file and export metrics, traces and checkpoints"""

    def run(self, scenario_path=None, seed=None, out_dir=None):
        """Run the scenario action"""
        print("🚀 DAN Simulator - Run Scenario")
        print("=" * 40)
        return self._run_guarded(scenario_path=scenario_path, seed=seed, out_dir=out_dir)

    def _execute(self, scenario_path=None, seed=None, out_dir=None):
        scenario = load_scenario(scenario_path)
        if seed is not None:
            scenario = scenario.with_seed(seed)
        out = Path(out_dir) if out_dir else Path(config.get_var_dir()) / "runs" / f"{scenario.name}-{scenario.seed}"

        print(f"📄 Scenario: {scenario.name} (population {scenario.population}, {scenario.duration} ticks)")
        print(f"🎲 Seed: {scenario.seed}")
        result = run(scenario)
        paths = export(result, out)

        frame = result.report.to_frame()
        print(f"✅ Completed {len(frame)} epochs")
        if len(frame):
            last = frame.iloc[-1]
            print(f"⛓️  Chain height: {last['chain_height']}")
            print(f"💰 YDR total: {last['ydr_total']}")
            print(f"⚖️  Game class (last epoch): {last['game_class']}")
        print(f"💾 Artifacts written to {out}")
        for name, path in paths.items():
            print(f"   {name}: {path.name}")
        return EXIT_OK
