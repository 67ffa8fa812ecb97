"""
Blockpost - Safety Monitor
===========================
keeps an eye on system resources so a big run doesnt take the box down
checks disk and ram against what the run is about to allocate, and
picks a sane worker count for the chains
"""

import os
import shutil
import sys
from typing import Dict, Optional

from utils.helpers import format_bytes, log


# bytes per retained draw per coordinate: theta vector + fitted matrix + quantile scratch
BYTES_PER_DRAW_COORD = 8 * 4
# bytes per configuration held by the oracle: size + log weight + probabilities
BYTES_PER_ORACLE_CONFIG = 8 * 4


def estimate_fit_bytes(n: int, chains: int, retained_per_chain: int) -> int:
    """rough memory for a fit: every retained draw expanded to length n"""
    return int(chains) * int(retained_per_chain) * int(n) * BYTES_PER_DRAW_COORD


def estimate_oracle_bytes(n: int) -> int:
    return (1 << max(n - 1, 0)) * BYTES_PER_ORACLE_CONFIG


class SafetyMonitor:
    """
    monitors system resources and reports if safe to continue

    1a. checks disk space where outputs go
    1b. checks memory against what the run needs
    1c. suggests how many worker threads to use
    """

    # minimum free disk space (in GB)
    MIN_DISK_GB = 0.5

    # keep this much memory free on top of what the run asks for
    MEMORY_HEADROOM = 1.5

    def __init__(self):
        # psutil makes the memory check possible, without it we only check disk
        try:
            import psutil
            self.psutil = psutil
        except ImportError:
            log("[Safety] psutil not installed - using basic checks only")
            self.psutil = None

    def check(self, required_bytes: int = 0, path: Optional[str] = None) -> Dict:
        """
        run all checks and return status
        returns dict with safe=True/False and individual statuses
        """
        result = {
            "safe": True,
            "disk": "OK",
            "memory": "OK",
            "required": format_bytes(required_bytes),
        }

        # 1a. disk check
        disk_status = self._check_disk(path or os.getcwd())
        result["disk"] = disk_status
        if disk_status == "CRITICAL":
            result["safe"] = False

        # 1b. memory check
        mem_status = self._check_memory(required_bytes)
        result["memory"] = mem_status
        if mem_status == "CRITICAL":
            result["safe"] = False

        return result

    def _check_disk(self, path: str) -> str:
        """check free disk space"""
        try:
            while path and not os.path.exists(path):
                path = os.path.dirname(path)
            free = shutil.disk_usage(path or os.getcwd()).free
            free_gb = free / (1024 ** 3)

            if free_gb < 0.1:
                return "CRITICAL"
            elif free_gb < self.MIN_DISK_GB:
                return "LOW"
            return "OK"
        except Exception as e:
            log(f"[Safety] disk check failed: {e}")
            return "OK"  # assume ok if we cant check

    def _check_memory(self, required_bytes: int) -> str:
        """check available memory against what the run needs"""
        if not self.psutil:
            return "OK"
        try:
            available = self.psutil.virtual_memory().available
            if required_bytes > available:
                return "CRITICAL"
            elif required_bytes * self.MEMORY_HEADROOM > available:
                return "LOW"
            return "OK"
        except Exception as e:
            log(f"[Safety] memory check failed: {e}")
            return "OK"

    def recommended_workers(self, chains: int, requested: Optional[int] = None) -> int:
        """one thread per chain, capped by cpu count unless asked otherwise"""
        if requested:
            return max(1, min(int(requested), chains))
        cpus = None
        if self.psutil:
            try:
                cpus = self.psutil.cpu_count(logical=True)
            except Exception:
                cpus = None
        cpus = cpus or os.cpu_count() or 1
        return max(1, min(chains, cpus))

    def get_system_info(self) -> Dict:
        """system info for the run log"""
        info = {
            "platform": sys.platform,
            "python_version": sys.version.split()[0],
        }

        if self.psutil:
            try:
                info["cpu_count"] = self.psutil.cpu_count()
                info["memory_total_gb"] = round(self.psutil.virtual_memory().total / (1024 ** 3), 2)
            except Exception:
                pass

        return info
