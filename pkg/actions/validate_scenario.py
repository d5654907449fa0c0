"""
Validate action for the DAN simulator
"""

from .base import BaseAction, EXIT_OK
from scenario import load_scenario


class ValidateScenarioAction(BaseAction):
    """Action to parse and validate a scenario file without running it"""

    def run(self, scenario_path=None):
        print("🚀 DAN Simulator - Validate Scenario")
        print("=" * 40)
        return self._run_guarded(scenario_path=scenario_path)

    def _execute(self, scenario_path=None):
        scenario = load_scenario(scenario_path)
        print(f"✅ {scenario_path} is valid")
        print(f"   name: {scenario.name}")
        print(f"   population: {scenario.population}, communities: {scenario.communities}")
        print(f"   duration: {scenario.duration} ticks, {scenario.epochs} epochs of {scenario.epoch_length}")
        print(f"   validators: {scenario.validator_count}")
        print(f"   interaction mode: {scenario.interaction.mode}")
        return EXIT_OK
