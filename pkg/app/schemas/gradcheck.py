"""
Gradient Check Schemas
"""

from typing import List

from pydantic import BaseModel, ConfigDict, Field


class GradcheckResult(BaseModel):
    model_config = ConfigDict(frozen=True)

    name: str
    instances: int = Field(..., ge=0)
    max_rel_error: float = Field(..., ge=0.0)
    tolerance: float
    passed: bool


class GradcheckReport(BaseModel):
    results: List[GradcheckResult]

    @property
    def passed(self) -> bool:
        return all(r.passed for r in self.results)
