"""
Dataset store for the DAN simulator
Caches generated synthetic datasets keyed by their generator parameters
"""

import hashlib
import json
from datetime import datetime
from pathlib import Path
from typing import Any, Dict, Optional

from config import config
from graph_dataset import GraphDataset, generate_synthetic
from logger import logger

log = logger.child("store")


class DatasetStore:
    """Manages cached synthetic datasets with timeout functionality"""

    def __init__(self, cache_dir: Optional[str] = None, timeout_hours: Optional[float] = None):
        """
        Initialize dataset store

        Args:
            cache_dir: Directory to store datasets (default: var/dan-sim/cache/datasets)
            timeout_hours: Hours before a cached dataset expires
        """
        self.cache_dir = Path(cache_dir or Path(config.get_cache_dir()) / "datasets")
        self.timeout_hours = float(timeout_hours if timeout_hours is not None
                                   else config.get('cache.timeout_hours', 168))
        self.timeout_seconds = self.timeout_hours * 3600

        self.cache_dir.mkdir(parents=True, exist_ok=True)

    def _generate_cache_key(self, params: Dict[str, Any]) -> str:
        """MD5 of the canonical JSON of the generator parameters"""
        key_string = json.dumps(params, sort_keys=True, separators=(",", ":"))
        return hashlib.md5(key_string.encode()).hexdigest()

    def _get_cache_file_path(self, cache_key: str) -> Path:
        """Sidecar path of a cached dataset"""
        return self.cache_dir / f"{cache_key}.json"

    def _is_cache_valid(self, cache_file: Path) -> bool:
        if not cache_file.exists() or not cache_file.with_suffix(".tensors").exists():
            return False
        try:
            age_seconds = datetime.now().timestamp() - cache_file.stat().st_mtime
            return age_seconds < self.timeout_seconds
        except (OSError, ValueError):
            return False

    def get_cached_dataset(self, params: Dict[str, Any]) -> Optional[GraphDataset]:
        """Cached dataset if present and not expired, else None"""
        cache_file = self._get_cache_file_path(self._generate_cache_key(params))
        if not self._is_cache_valid(cache_file):
            return None
        try:
            return GraphDataset.load(cache_file)
        except (OSError, ValueError, KeyError) as e:
            print(f"⚠️ Error reading cached dataset {cache_file}: {e}")
            return None

    def cache_dataset(self, params: Dict[str, Any], dataset: GraphDataset) -> bool:
        cache_key = self._generate_cache_key(params)
        try:
            dataset.metadata["_cache_info"] = {
                "cached_at": datetime.now().isoformat(),
                "cache_key": cache_key,
                "params": params,
            }
            dataset.save(self._get_cache_file_path(cache_key))
            return True
        except (OSError, ValueError) as e:
            print(f"⚠️ Error writing cached dataset: {e}")
            return False

    def get_or_generate(self, params: Dict[str, Any], use_cache: bool = True) -> GraphDataset:
        """Load from cache or run generate_synthetic(**params) and cache the result"""
        if use_cache:
            cached = self.get_cached_dataset(params)
            if cached is not None:
                log.info(f"dataset cache hit {self._generate_cache_key(params)}")
                return cached
        dataset = generate_synthetic(**params)
        if use_cache:
            self.cache_dataset(params, dataset)
        return dataset

    def _entries(self):
        return sorted(self.cache_dir.glob("*.json"))

    def _remove(self, cache_file: Path) -> None:
        cache_file.unlink(missing_ok=True)
        cache_file.with_suffix(".tensors").unlink(missing_ok=True)

    def clear_cache(self) -> int:
        """Remove every cached dataset; returns the number removed"""
        cleared = 0
        try:
            for cache_file in self._entries():
                self._remove(cache_file)
                cleared += 1
        except OSError as e:
            print(f"⚠️ Error clearing cache: {e}")
        return cleared

    def cleanup_expired(self) -> int:
        removed = 0
        try:
            for cache_file in self._entries():
                if not self._is_cache_valid(cache_file):
                    self._remove(cache_file)
                    removed += 1
        except OSError as e:
            print(f"⚠️ Error cleaning up expired cache: {e}")
        return removed

    def get_cache_stats(self) -> Dict[str, Any]:
        stats = {
            'total_datasets': 0,
            'valid_datasets': 0,
            'expired_datasets': 0,
            'total_size_bytes': 0,
            'oldest': None,
            'newest': None,
        }
        times = []
        for cache_file in self._entries():
            try:
                stats['total_datasets'] += 1
                blob = cache_file.with_suffix(".tensors")
                stats['total_size_bytes'] += cache_file.stat().st_size + (blob.stat().st_size if blob.exists() else 0)
                if self._is_cache_valid(cache_file):
                    stats['valid_datasets'] += 1
                else:
                    stats['expired_datasets'] += 1
                times.append(cache_file.stat().st_mtime)
            except OSError:
                continue
        if times:
            stats['oldest'] = datetime.fromtimestamp(min(times)).isoformat()
            stats['newest'] = datetime.fromtimestamp(max(times)).isoformat()
        return stats
