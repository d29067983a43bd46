from __future__ import annotations

import json
from dataclasses import dataclass
from datetime import datetime
from typing import Any

from sqlalchemy import select
from sqlalchemy.orm import Session

from core.errors import ConfigInvalid
from core.exporters import render_report
from core.models import RunRecord, ScenarioKind


@dataclass
class RunView:
    id: int
    name: str
    kind: ScenarioKind
    seed: int
    n_sites: int
    passed: bool
    version: str
    created_at: datetime | None


def save_report(
    session: Session,
    *,
    report: dict[str, Any],
    scenario: dict[str, Any],
) -> RunRecord:
    """Store a serialised RunReport / ParallelReport together with its scenario echo."""
    kind = scenario.get("kind")
    if kind not in {k.value for k in ScenarioKind}:
        raise ConfigInvalid("kind", f"알 수 없는 시나리오 종류입니다: {kind}")

    record = RunRecord(
        name=str(report.get("name") or scenario.get("name") or "scenario"),
        kind=ScenarioKind(kind),
        seed=int(scenario.get("seed", 0)),
        n_sites=int(report.get("n_sites", 1)),
        passed=bool(report.get("passed")),
        scenario_json=json.dumps(scenario, sort_keys=True, ensure_ascii=False),
        report_json=render_report(report, "json"),
        version=str(report.get("provenance", {}).get("version") or _site_version(report)),
    )
    session.add(record)
    session.flush()
    return record


def _site_version(report: dict[str, Any]) -> str:
    for site in report.get("sites", []):
        inner = site.get("report") or {}
        version = inner.get("provenance", {}).get("version")
        if version:
            return str(version)
    return "unknown"


def list_runs(session: Session, *, limit: int | None = 20) -> list[RunView]:
    stmt = select(RunRecord).order_by(RunRecord.id.desc())
    if limit:
        stmt = stmt.limit(limit)
    rows = session.execute(stmt).scalars().all()
    return [
        RunView(
            id=row.id,
            name=row.name,
            kind=row.kind,
            seed=row.seed,
            n_sites=row.n_sites,
            passed=row.passed,
            version=row.version,
            created_at=row.created_at,
        )
        for row in rows
    ]


def load_report(session: Session, run_id: int) -> dict[str, Any] | None:
    row = session.get(RunRecord, run_id)
    if row is None:
        return None
    return json.loads(row.report_json)
