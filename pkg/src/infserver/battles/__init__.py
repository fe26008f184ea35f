"""End-to-end reproduction of the four battles and the power-law figure."""

from .core import BattleScenario, load_scenarios, replot, run_battle, run_figure1

__all__ = ["BattleScenario", "load_scenarios", "replot", "run_battle", "run_figure1"]
