"""DuckDB store for evaluation and ablation results."""
import json
import logging
from datetime import datetime
from pathlib import Path
from typing import Dict, List, Optional

import duckdb
import pandas as pd

from config.settings import REPORTS_DIR, RESULTS_DB_PATH

RESULT_TABLES = ("evaluation_runs", "ablation_runs")


class ResultsStore:
    """Context manager for the results database.

    Every write is followed by a CSV export of the table written to.
    """

    def __init__(self, db_path: str = RESULTS_DB_PATH, backup_dir: Optional[Path] = None):
        self.db_path = str(db_path)
        self.backup_dir = Path(backup_dir) if backup_dir is not None else REPORTS_DIR
        self.conn = None
        self.logger = logging.getLogger(__name__)

    def __enter__(self):
        Path(self.db_path).parent.mkdir(parents=True, exist_ok=True)
        self.conn = duckdb.connect(self.db_path)
        self.setup_tables()
        return self

    def __exit__(self, exc_type, exc_val, exc_tb):
        if self.conn:
            self.conn.close()
            self.conn = None

    def setup_tables(self):
        self.conn.execute("""
            CREATE TABLE IF NOT EXISTS evaluation_runs (
                run_id VARCHAR,
                checkpoint VARCHAR,
                manifest VARCHAR,
                task VARCHAR,
                variant VARCHAR,
                seed INTEGER,
                config_hash VARCHAR,
                metric VARCHAR,
                value DOUBLE,
                details TEXT,
                recorded_at TIMESTAMP
            )
        """)
        self.conn.execute("""
            CREATE TABLE IF NOT EXISTS ablation_runs (
                ablation_id VARCHAR,
                variant VARCHAR,
                seed INTEGER,
                config_hash VARCHAR,
                pq DOUBLE,
                ap DOUBLE,
                oiou DOUBLE,
                final_loss DOUBLE,
                recorded_at TIMESTAMP
            )
        """)

    def _append(self, table: str, rows: List[Dict]):
        if not rows:
            return
        frame = pd.DataFrame(rows)
        frame["recorded_at"] = datetime.now()
        self.conn.register("rows_df", frame)
        columns = ", ".join(frame.columns)
        self.conn.execute(f"INSERT INTO {table} ({columns}) SELECT {columns} FROM rows_df")
        self.conn.unregister("rows_df")
        self.logger.info(f"💾 Saved {len(frame)} rows to {table}")
        self._create_backup(table)

    def _create_backup(self, table: str):
        try:
            self.backup_dir.mkdir(parents=True, exist_ok=True)
            backup_file = self.backup_dir / f"{table}_backup.csv"
            self.query(f"SELECT * FROM {table}").to_csv(backup_file, index=False)
            self.logger.info(f"💾 Backup created: {backup_file}")
        except OSError as e:
            self.logger.warning(f"⚠️ Backup creation failed: {e}")

    def record_evaluation(self, run_id: str, report: Dict, checkpoint: str = "", manifest: str = "",
                          variant: str = "", seed: int = 0, config_hash: str = ""):
        """One row per scalar metric in ``report['metrics']``."""
        rows = []
        for metric, value in report.get("metrics", {}).items():
            rows.append({
                "run_id": run_id, "checkpoint": str(checkpoint), "manifest": str(manifest),
                "task": report.get("task", ""), "variant": variant, "seed": int(seed), "config_hash": config_hash,
                "metric": metric, "value": float(value),
                "details": json.dumps(report.get("breakdown", {}).get(metric, {}), sort_keys=True, default=str),
            })
        self._append("evaluation_runs", rows)

    def record_ablation(self, ablation_id: str, rows: List[Dict]):
        self._append("ablation_runs", [{"ablation_id": ablation_id, **row} for row in rows])

    def query(self, sql: str) -> pd.DataFrame:
        try:
            return self.conn.execute(sql).df()
        except duckdb.Error as e:
            self.logger.error(f"❌ Query execution failed: {e}")
            raise

    def table_exists(self, table: str) -> bool:
        result = self.conn.execute(
            "SELECT COUNT(*) FROM information_schema.tables WHERE table_name = ?", [table]).fetchone()
        return bool(result and result[0] > 0)
