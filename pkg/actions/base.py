"""
Base action class for DAN simulator actions
"""

from abc import ABC, abstractmethod

from errors import DANError, ScenarioError
from logger import logger

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_RUNTIME = 2


class BaseAction(ABC):
    """Base class for all CLI actions"""

    @abstractmethod
    def run(self, **kwargs) -> int:
        """Run the action and return the exit code. Must be implemented by subclasses."""
        pass

    @abstractmethod
    def _execute(self, **kwargs) -> int:
        """Action body. Must be implemented by subclasses."""
        pass

    def _run_guarded(self, **kwargs) -> int:
        """Run _execute, mapping scenario errors to exit 1 and everything else to exit 2"""
        try:
            logger.info(f"Starting action: {self.__class__.__name__}")
            return self._execute(**kwargs)
        except ScenarioError as e:
            logger.error(f"Validation error in action {self.__class__.__name__}: {e}")
            print(f"❌ Invalid scenario: {e}")
            return EXIT_VALIDATION
        except DANError as e:
            logger.error(f"Error in action {self.__class__.__name__}: {e}")
            print(f"❌ Simulation error: {e}")
            return EXIT_RUNTIME
        except Exception as e:
            logger.error(f"Error in action {self.__class__.__name__}: {e}")
            print(f"❌ Error in action: {e}")
            return EXIT_RUNTIME
        finally:
            logger.info(f"Completed action: {self.__class__.__name__}")
