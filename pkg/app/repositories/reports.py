"""
Report Repository

Step reports as JSON lines, ablation tables as CSV and JSON.
"""

import csv
import io
import json
from pathlib import Path
from typing import List

from app.core.exceptions import DataIOError
from app.repositories.base import BaseRepository, PathLike
from app.schemas.training import AblationTable, StepReport
from app.utils.helpers import dumps_stable

ABLATION_COLUMNS = ["variant", "seed", "use_gpa", "use_ctl", "use_tcr", "miou"]


class ReportRepository(BaseRepository):

    def write_step_reports(self, reports: List[StepReport], path: PathLike) -> Path:
        lines = [json.dumps(r.model_dump(mode="json"), allow_nan=False) for r in reports]
        return self.write_text(path, "".join(line + "\n" for line in lines))

    def read_step_reports(self, path: PathLike) -> List[StepReport]:
        reports = []
        for number, line in enumerate(self.read_text(path).splitlines(), start=1):
            if not line.strip():
                continue
            try:
                reports.append(StepReport.model_validate_json(line))
            except ValueError as e:
                raise DataIOError(f"{path}:{number}: invalid step report: {e}")
        return reports

    def ablation_csv(self, table: AblationTable) -> str:
        buffer = io.StringIO()
        writer = csv.writer(buffer, lineterminator="\n")
        writer.writerow(ABLATION_COLUMNS)
        for row in table.rows:
            writer.writerow([
                row.variant, row.seed, int(row.use_gpa), int(row.use_ctl), int(row.use_tcr), f"{row.miou:.6f}",
            ])
        return buffer.getvalue()

    def write_ablation(self, table: AblationTable, directory: PathLike) -> List[Path]:
        directory = self.resolve(directory)
        summary = {
            "rows": [r.model_dump(mode="json") for r in table.rows],
            "mean_miou": table.mean_by_variant(),
        }
        return [
            self.write_text(directory / "ablation.csv", self.ablation_csv(table)),
            self.write_text(directory / "ablation.json", dumps_stable(summary)),
        ]
