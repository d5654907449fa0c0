"""
Cache management action for the DAN simulator

Shows statistics for, clears, or expires the cached synthetic datasets
"""

import argparse
from .base import BaseAction, EXIT_OK, EXIT_VALIDATION
from dataset_store import DatasetStore
from logger import logger


def format_size(size_bytes: float) -> str:
    """Format size in bytes to human readable format."""
    if size_bytes == 0:
        return "0 B"
    size_names = ["B", "KB", "MB", "GB"]
    i = 0
    while size_bytes >= 1024 and i < len(size_names) - 1:
        size_bytes /= 1024.0
        i += 1
    return f"{size_bytes:.1f} {size_names[i]}"


class CacheManageAction(BaseAction):
    """Action for managing the dataset cache."""

    def __init__(self, store: DatasetStore = None):
        self.store = store or DatasetStore()

    def run(self, cache_action=None):
        return self._run_guarded(cache_action=cache_action)

    def _execute(self, cache_action=None):
        if cache_action == 'stats':
            return self._show_stats()
        if cache_action == 'clear':
            cleared = self.store.clear_cache()
            print(f"✅ Cleared {cleared} cached datasets")
            return EXIT_OK
        if cache_action == 'cleanup':
            removed = self.store.cleanup_expired()
            print(f"🧹 Cleaned up {removed} expired datasets")
            return EXIT_OK
        logger.error(f"Unknown cache management action: {cache_action}")
        return EXIT_VALIDATION

    def _show_stats(self):
        stats = self.store.get_cache_stats()
        print("📊 Dataset Cache Statistics")
        print("=" * 50)
        print(f"Total datasets: {stats['total_datasets']}")
        print(f"Valid datasets: {stats['valid_datasets']}")
        print(f"Expired datasets: {stats['expired_datasets']}")
        if stats['total_datasets'] > 0:
            print(f"\nCache directory: {self.store.cache_dir}")
            print(f"Cache size: {format_size(stats['total_size_bytes'])}")
            for label in ('oldest', 'newest'):
                if stats[label] is not None:
                    print(f"{label.capitalize()}: {stats[label]}")
        return EXIT_OK


def create_parser(subparsers) -> argparse.ArgumentParser:
    """Create the cache argument parser."""
    parser = subparsers.add_parser(
        'cache',
        help='Manage cached synthetic datasets (view stats, clear, cleanup expired)'
    )
    action_subparsers = parser.add_subparsers(
        dest='cache_action',
        help='Cache management action',
        required=True
    )
    action_subparsers.add_parser('stats', help='Show cache statistics')
    action_subparsers.add_parser('clear', help='Remove every cached dataset')
    action_subparsers.add_parser('cleanup', help='Remove expired datasets')
    return parser
