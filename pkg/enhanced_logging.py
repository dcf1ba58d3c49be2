"""
Enhanced Logging System
- Structured logging JSON Lines per ogni stage della pipeline
- Rotation automatica
- Statistiche di run (tempi, patch) esportabili
I tempi finiscono solo nei log, mai nei file di output.
"""
import logging
import json
import os
from datetime import datetime
from logging.handlers import RotatingFileHandler
from typing import Dict, Optional, Sequence

import config

_MARKER = "_matgen_handler"


class RunLogger:
    """Logger specializzato per gli eventi di una run (uno per stage)"""

    def __init__(self, logs_dir: Optional[str] = None):
        self.logs_dir = logs_dir or config.LOGS_DIR
        os.makedirs(self.logs_dir, exist_ok=True)
        self.log_file = os.path.join(self.logs_dir, 'run_events.jsonl')
        self.stats_file = os.path.join(self.logs_dir, 'run_stats.json')

        # Logger dedicato, non propaga alla console
        self.logger = logging.getLogger('matgen.run_events')
        self.logger.setLevel(logging.INFO)
        self.logger.propagate = False
        for h in list(self.logger.handlers):
            self.logger.removeHandler(h)
            h.close()

        handler = RotatingFileHandler(
            self.log_file,
            maxBytes=5*1024*1024,  # 5MB
            backupCount=3
        )
        handler.setFormatter(logging.Formatter('%(message)s'))
        self.logger.addHandler(handler)

        self.stats = self._empty_stats()

    @staticmethod
    def _empty_stats() -> Dict:
        return {
            'stages': [],
            'total_seconds': 0.0,
            'peak_patches': 0,
        }

    def log_stage(self, event: str, stage: int, shape: Sequence[int], seconds: float,
                  patches: int = 0, **extra):
        """Registra un evento di stage (sampling, decode, export)"""
        entry = {
            'timestamp': datetime.now().isoformat(),
            'event': event,
            'stage': stage,
            'shape': [int(s) for s in shape],
            'seconds': round(float(seconds), 4),
            'patches': int(patches),
        }
        entry.update(extra)
        self.logger.info(json.dumps(entry, sort_keys=True, default=str))

        self.stats['stages'].append({k: entry[k] for k in ('event', 'stage', 'shape', 'seconds', 'patches')})
        self.stats['total_seconds'] = round(self.stats['total_seconds'] + entry['seconds'], 4)
        self.stats['peak_patches'] = max(self.stats['peak_patches'], entry['patches'])
        logging.getLogger(__name__).info(
            f"⏱️ {event} stage {stage} {tuple(entry['shape'])}: {entry['seconds']:.3f}s, {patches} patch"
        )

    def get_stats(self) -> Dict:
        """Ottieni statistiche correnti"""
        return self.stats

    def save_stats(self) -> Optional[str]:
        """Salva stats su file"""
        try:
            with open(self.stats_file, 'w') as f:
                json.dump(self.stats, f, indent=2)
            return self.stats_file
        except OSError as e:
            logging.getLogger(__name__).error(f"❌ Errore salvataggio stats: {e}")
            return None

    def close(self):
        for h in list(self.logger.handlers):
            self.logger.removeHandler(h)
            h.close()


def setup_enhanced_logging(level: str = None, logs_dir: str = None) -> str:
    """
    Setup logging con rotazione: file principale + console.
    Sostituisce solo gli handler installati da una chiamata precedente.
    """
    logs_dir = logs_dir or config.LOGS_DIR
    os.makedirs(logs_dir, exist_ok=True)
    main_log = os.path.join(logs_dir, 'matgen_main.log')

    root_logger = logging.getLogger()
    root_logger.setLevel(getattr(logging, (level or config.LOG_LEVEL).upper(), logging.INFO))

    # Rimuovi handler nostri per evitare duplicati
    for h in list(root_logger.handlers):
        if getattr(h, _MARKER, False):
            root_logger.removeHandler(h)
            h.close()

    file_handler = RotatingFileHandler(
        main_log,
        maxBytes=10*1024*1024,  # 10MB
        backupCount=5
    )
    file_handler.setFormatter(logging.Formatter(
        '%(asctime)s - %(name)s - %(levelname)s - %(message)s'
    ))

    console_handler = logging.StreamHandler()
    console_handler.setFormatter(logging.Formatter(
        '%(levelname)s - %(message)s'
    ))

    for h in (file_handler, console_handler):
        setattr(h, _MARKER, True)
        root_logger.addHandler(h)

    logging.info(f"✅ Enhanced logging setup: {logs_dir}")
    return main_log

# End enhanced_logging.py
