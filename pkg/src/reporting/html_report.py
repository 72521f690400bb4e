"""Evaluation and ablation reports: JSON, per-class CSV and HTML."""
import json
import logging
from datetime import datetime
from pathlib import Path
from typing import Dict, List

import numpy as np
import pandas as pd
from jinja2 import Template

_STYLE = """
        body {
            font-family: 'Segoe UI', Tahoma, Geneva, Verdana, sans-serif;
            line-height: 1.6;
            margin: 0;
            padding: 20px;
            background-color: #f8f9fa;
        }
        .container {
            max-width: 1100px;
            margin: 0 auto;
            background: white;
            padding: 30px;
            border-radius: 8px;
            box-shadow: 0 4px 6px rgba(0,0,0,0.1);
        }
        .header {
            text-align: center;
            margin-bottom: 30px;
            padding-bottom: 20px;
            border-bottom: 3px solid #3498db;
        }
        .metrics-grid {
            display: grid;
            grid-template-columns: repeat(auto-fit, minmax(160px, 1fr));
            gap: 16px;
            margin-bottom: 30px;
        }
        .metric-card {
            background: linear-gradient(135deg, #667eea 0%, #764ba2 100%);
            color: white;
            padding: 16px;
            border-radius: 8px;
            text-align: center;
        }
        .metric-value { font-size: 1.8em; font-weight: bold; }
        .metric-label { font-size: 0.9em; opacity: 0.9; }
        .table { width: 100%; border-collapse: collapse; margin-bottom: 20px; }
        .table th, .table td { padding: 10px; text-align: left; border-bottom: 1px solid #ddd; }
        .table th { background-color: #f8f9fa; color: #2c3e50; }
        .alert { background: #fdecea; color: #922b21; padding: 12px; border-radius: 6px; margin-bottom: 20px; }
        .footer { text-align: center; color: #7f8c8d; font-size: 0.9em; margin-top: 30px; }
"""

EVALUATION_TEMPLATE = """
<!DOCTYPE html>
<html lang="en">
<head>
    <meta charset="UTF-8">
    <title>Segmentation Evaluation - {{ report_date }}</title>
    <style>{{ style }}</style>
</head>
<body>
    <div class="container">
        <div class="header">
            <h1>Segmentation Evaluation</h1>
            <div>Task: {{ report.task }} | Images: {{ report.num_images }} | Checkpoint: {{ report.checkpoint }}</div>
        </div>
        <div class="metrics-grid">
            {% for name, value in report.metrics.items() %}
            <div class="metric-card">
                <div class="metric-value">{{ "%.4f"|format(value) }}</div>
                <div class="metric-label">{{ name }}</div>
            </div>
            {% endfor %}
        </div>
        {% if per_class %}
        <h2>Per-class breakdown</h2>
        <table class="table">
            <tr>{% for col in per_class[0].keys() %}<th>{{ col }}</th>{% endfor %}</tr>
            {% for row in per_class %}
            <tr>{% for value in row.values() %}<td>{{ value }}</td>{% endfor %}</tr>
            {% endfor %}
        </table>
        {% endif %}
        <div class="footer">Report Date: {{ report_date }}</div>
    </div>
</body>
</html>
"""

ABLATION_TEMPLATE = """
<!DOCTYPE html>
<html lang="en">
<head>
    <meta charset="UTF-8">
    <title>Decoder Design Ablation - {{ report_date }}</title>
    <style>{{ style }}</style>
</head>
<body>
    <div class="container">
        <div class="header">
            <h1>Decoder / Fusion Design Ablation</h1>
            <div>Seeds: {{ result.seeds|join(", ") }}</div>
        </div>
        {% if result.ordering and not result.ordering.holds %}
        <div class="alert">Expected ordering did not hold: {{ result.ordering.description }}</div>
        {% endif %}
        <table class="table">
            <tr><th>Variant</th><th>PQ</th><th>AP</th><th>oIoU</th><th>Runs</th></tr>
            {% for row in result.summary %}
            <tr>
                <td>{{ row.variant }}</td>
                <td>{{ "%.4f"|format(row.pq) }}</td>
                <td>{{ "%.4f"|format(row.ap) }}</td>
                <td>{{ "%.4f"|format(row.oiou) }}</td>
                <td>{{ row.runs }}</td>
            </tr>
            {% endfor %}
        </table>
        <div class="footer">Report Date: {{ report_date }}</div>
    </div>
</body>
</html>
"""


def _jsonable(value):
    if isinstance(value, dict):
        return {str(k): _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    if isinstance(value, np.ndarray):
        return value.tolist()
    if isinstance(value, (np.floating, np.integer, np.bool_)):
        return value.item()
    return value


def per_class_rows(report: Dict) -> List[Dict]:
    """Flatten every per-class breakdown in a report into one row per (metric, class)."""
    rows = []
    for metric, breakdown in report.get("breakdown", {}).items():
        for label, value in breakdown.get("per_class", {}).items():
            row = {"metric": metric, "class": label}
            if isinstance(value, dict):
                row.update({k: v for k, v in value.items()})
            else:
                row["value"] = value
            rows.append(row)
    return rows


class ReportWriter:
    """Write structured and HTML reports into one directory."""

    def __init__(self, out_dir: Path):
        self.out_dir = Path(out_dir)
        self.logger = logging.getLogger(__name__)

    def _write(self, name: str, text: str) -> Path:
        self.out_dir.mkdir(parents=True, exist_ok=True)
        path = self.out_dir / name
        path.write_text(text, encoding="utf-8")
        return path

    def write_evaluation(self, report: Dict, stem: str = "evaluation") -> Dict[str, str]:
        try:
            self.logger.info("📊 Writing evaluation report...")
            json_path = self._write(f"{stem}.json", json.dumps(_jsonable(report), indent=2, sort_keys=True) + "\n")
            rows = per_class_rows(report)
            csv_path = self.out_dir / f"{stem}_per_class.csv"
            pd.DataFrame(rows, columns=None if rows else ["metric", "class", "value"]).to_csv(csv_path, index=False)
            html = Template(EVALUATION_TEMPLATE).render(
                report_date=datetime.now().strftime('%B %d, %Y at %I:%M %p'),
                style=_STYLE, report=report, per_class=rows)
            html_path = self._write(f"{stem}.html", html)
            self.logger.info(f"✅ Report generated: {html_path}")
            return {"json": str(json_path), "csv": str(csv_path), "html": str(html_path)}
        except Exception as e:
            self.logger.error(f"❌ Report generation failed: {e}")
            raise

    def write_ablation(self, result: Dict, stem: str = "ablation") -> Dict[str, str]:
        try:
            self.logger.info("📊 Writing ablation report...")
            json_path = self._write(f"{stem}.json", json.dumps(_jsonable(result), indent=2, sort_keys=True) + "\n")
            csv_path = self.out_dir / f"{stem}_runs.csv"
            pd.DataFrame(result.get("runs", [])).to_csv(csv_path, index=False)
            html = Template(ABLATION_TEMPLATE).render(
                report_date=datetime.now().strftime('%B %d, %Y at %I:%M %p'),
                style=_STYLE, result=result)
            html_path = self._write(f"{stem}.html", html)
            self.logger.info(f"✅ Report generated: {html_path}")
            return {"json": str(json_path), "csv": str(csv_path), "html": str(html_path)}
        except Exception as e:
            self.logger.error(f"❌ Report generation failed: {e}")
            raise
