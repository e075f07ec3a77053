import json
import logging
import sqlite3
from typing import Dict, List, Optional

from training.trainer import RunReport

logger = logging.getLogger(__name__)


class DatabaseManager:
    def __init__(self, db_path: str = "svft_results.db"):
        self.db_path = db_path
        self.init_database()

    def get_connection(self):
        """Get database connection with foreign key support"""
        conn = sqlite3.connect(self.db_path)
        conn.execute("PRAGMA foreign_keys = ON")
        conn.row_factory = sqlite3.Row
        return conn

    def init_database(self):
        """Initialize database with all required tables"""
        conn = self.get_connection()
        try:
            self._create_runs_table(conn)
            self._create_loss_curves_table(conn)
            conn.commit()
            logger.debug("Results database ready at %s", self.db_path)
        except sqlite3.Error:
            conn.rollback()
            raise
        finally:
            conn.close()

    def reset_database(self):
        """Drop every stored run and recreate the schema"""
        conn = self.get_connection()
        try:
            conn.execute("DROP TABLE IF EXISTS loss_curves")
            conn.execute("DROP TABLE IF EXISTS runs")
            conn.commit()
        finally:
            conn.close()
        self.init_database()

    def _create_runs_table(self, conn):
        conn.execute('''
            CREATE TABLE IF NOT EXISTS runs (
                id INTEGER PRIMARY KEY AUTOINCREMENT,
                experiment VARCHAR(100),
                method VARCHAR(20) NOT NULL,
                variant VARCHAR(100),
                trainable_params INTEGER NOT NULL,
                seed INTEGER NOT NULL,
                initial_loss REAL NOT NULL,
                final_loss REAL NOT NULL,
                reference_loss REAL NOT NULL,
                recovery REAL NOT NULL,
                wall_ms REAL,
                config_json TEXT NOT NULL,
                created_at TIMESTAMP DEFAULT CURRENT_TIMESTAMP
            )
        ''')
        conn.execute('CREATE INDEX IF NOT EXISTS idx_runs_method_params ON runs(method, trainable_params)')

    def _create_loss_curves_table(self, conn):
        conn.execute('''
            CREATE TABLE IF NOT EXISTS loss_curves (
                run_id INTEGER NOT NULL,
                epoch INTEGER NOT NULL,
                loss REAL NOT NULL,
                FOREIGN KEY (run_id) REFERENCES runs (id) ON DELETE CASCADE,
                UNIQUE(run_id, epoch)
            )
        ''')

    def add_report(self, report: RunReport, experiment: Optional[str] = None) -> int:
        """Store one run and its loss curve, returning the run id"""
        conn = self.get_connection()
        try:
            cursor = conn.execute('''
                INSERT INTO runs (experiment, method, variant, trainable_params, seed, initial_loss,
                                  final_loss, reference_loss, recovery, wall_ms, config_json)
                VALUES (?, ?, ?, ?, ?, ?, ?, ?, ?, ?, ?)
            ''', (experiment, report.method, report.variant, report.trainable_params, report.config.seed,
                  report.initial_loss, report.final_loss, report.reference_loss, report.recovery,
                  report.wall_ms, report.config.model_dump_json()))
            run_id = cursor.lastrowid
            conn.executemany(
                'INSERT INTO loss_curves (run_id, epoch, loss) VALUES (?, ?, ?)',
                [(run_id, epoch, loss) for epoch, loss in enumerate(report.loss_curve)],
            )
            conn.commit()
            return run_id
        except sqlite3.Error:
            conn.rollback()
            raise
        finally:
            conn.close()

    def add_reports(self, reports: List[RunReport], experiment: Optional[str] = None) -> List[int]:
        return [self.add_report(report, experiment) for report in reports]

    def get_reports(self, method: Optional[str] = None, experiment: Optional[str] = None) -> List[Dict]:
        """Stored runs as dicts, each with its loss curve and decoded config"""
        query = 'SELECT * FROM runs WHERE 1 = 1'
        args = []
        if method is not None:
            query += ' AND method = ?'
            args.append(method)
        if experiment is not None:
            query += ' AND experiment = ?'
            args.append(experiment)
        query += ' ORDER BY id'
        conn = self.get_connection()
        try:
            rows = [dict(row) for row in conn.execute(query, args).fetchall()]
            for row in rows:
                curve = conn.execute(
                    'SELECT loss FROM loss_curves WHERE run_id = ? ORDER BY epoch', (row['id'],)
                ).fetchall()
                row['loss_curve'] = [r['loss'] for r in curve]
                row['config'] = json.loads(row.pop('config_json'))
            return rows
        finally:
            conn.close()
