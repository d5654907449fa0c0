"""
Actions package for the DAN simulator
Contains all CLI actions for the application
"""

from .base import BaseAction
from .run_scenario import RunScenarioAction
from .validate_scenario import ValidateScenarioAction
from .forecast import ForecastAction
from .gradcheck import GradcheckAction
from .report import ReportAction
from .cache_manage import CacheManageAction

__all__ = ['BaseAction', 'RunScenarioAction', 'ValidateScenarioAction', 'ForecastAction',
           'GradcheckAction', 'ReportAction', 'CacheManageAction']
