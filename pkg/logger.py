#!/usr/bin/env python3
"""
Logging for the DAN simulator

One "dan" logger writes to a size-rotated file under var/dan-sim/logs and to
stderr. Modules take a child logger (`logger.child("consensus")`). DAN_LOG
overrides the configured level and also raises the console to that level.
"""

import logging
import os
from logging.handlers import RotatingFileHandler
from pathlib import Path

from config import config

FORMAT = '%(asctime)s - %(name)s - %(levelname)s - %(message)s'

_UNITS = {'KB': 1024, 'MB': 1024 ** 2, 'GB': 1024 ** 3}


def parse_size(text) -> int:
    """'10MB' -> 10485760; a bare number is bytes"""
    text = str(text).strip().upper()
    for suffix, factor in _UNITS.items():
        if text.endswith(suffix):
            return int(text[:-len(suffix)]) * factor
    return int(text)


class DANLogger:
    def __init__(self, name="dan"):
        self.name = name
        self.log_file = Path(config.get_logs_dir()) / config.get('logging.file', 'dan-sim.log')
        override = os.environ.get('DAN_LOG')
        level_name = override or config.get('logging.level', 'INFO')
        self.level = getattr(logging, str(level_name).upper(), logging.INFO)
        self.console_level = self.level if override else logging.WARNING

        self.log_file.parent.mkdir(parents=True, exist_ok=True)
        self.logger = self._setup_logger()

    def _setup_logger(self) -> logging.Logger:
        log = logging.getLogger(self.name)
        log.setLevel(self.level)
        log.propagate = False
        log.handlers.clear()

        formatter = logging.Formatter(FORMAT, datefmt='%Y-%m-%d %H:%M:%S')
        file_handler = RotatingFileHandler(
            self.log_file,
            maxBytes=parse_size(config.get('logging.max_size', '10MB')),
            backupCount=int(config.get('logging.backup_count', 5)),
        )
        file_handler.setLevel(self.level)
        console = logging.StreamHandler()
        console.setLevel(self.console_level)
        for handler in (file_handler, console):
            handler.setFormatter(formatter)
            log.addHandler(handler)
        return log

    def child(self, suffix: str) -> logging.Logger:
        return self.logger.getChild(suffix)

    def info(self, message):
        self.logger.info(message)

    def warning(self, message):
        self.logger.warning(message)

    def error(self, message):
        self.logger.error(message)

    def debug(self, message):
        self.logger.debug(message)


logger = DANLogger()
