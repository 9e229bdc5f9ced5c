"""
Log Manager - satu file log aktif per service
Dipakai oleh CLI untuk setup file + stream handler

"""

import logging
from pathlib import Path
from typing import Optional

from src import config

LOG_FORMAT = '%(asctime)s - %(name)s - %(levelname)s - %(message)s'


class LogManager:

    def __init__(self, log_dir: Optional[Path] = None):
        self.log_dir = Path(log_dir) if log_dir else config.LOG_DIR

    def get_active_log_path(self, service_name: str) -> Path:
        """
        Path file log untuk service tertentu
        Folder dibuat otomatis kalau belum ada
        """
        self.log_dir.mkdir(parents=True, exist_ok=True)
        return self.log_dir / f"{service_name}.log"

    def setup(self, service_name: str, level: Optional[str] = None, to_file: bool = True) -> Optional[Path]:
        """
        Configure root logging untuk satu service

        Args:
            service_name: Nama service (dipakai sebagai nama file log)
            level: Log level (default dari INFOFLOW_LOG_LEVEL)
            to_file: False untuk stream handler saja

        Returns:
            Path file log aktif, atau None kalau file logging dimatikan
        """
        level_value = getattr(logging, (level or config.LOG_LEVEL).upper(), logging.INFO)
        formatter = logging.Formatter(LOG_FORMAT)

        stream_handler = logging.StreamHandler()
        stream_handler.setLevel(level_value)
        stream_handler.setFormatter(formatter)
        handlers = [stream_handler]

        log_file_path = None
        if to_file:
            try:
                log_file_path = self.get_active_log_path(service_name)
                file_handler = logging.FileHandler(log_file_path, mode='a', encoding='utf-8')
                file_handler.setLevel(level_value)
                file_handler.setFormatter(formatter)
                handlers.append(file_handler)
            except OSError as e:
                # Read-only working dir: tetap jalan dengan stream handler
                log_file_path = None
                logging.getLogger(__name__).warning(f"File logging disabled: {e}")

        logging.basicConfig(level=level_value, handlers=handlers, force=True)
        return log_file_path
