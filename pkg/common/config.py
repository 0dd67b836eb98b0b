"""
Run configuration: built-in defaults <- JSON file (--config) <- command-line flags.
"""

import json
import logging
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Dict, List, Optional

from common.errors import FormatError
from common.settings import default_jobs, default_workdir

logger = logging.getLogger(__name__)

MASKING_CHOICES = ("zero", "mean")
ABLATION_CHOICES = ("no-physical", "no-semantic")
RESTRICTION_CHOICES = ("global", "conditional")

# values that change how work is scheduled, never what is computed
RUNTIME_KEYS = ("jobs", "workdir", "data")


@dataclass
class RunConfig:
    seed: int = 0
    k: int = 5
    M: int = 1
    resolutions: List[int] = field(default_factory=lambda: [15, 50, 80])
    clusters: int = 20
    masking: str = "mean"
    model: Optional[str] = None
    embedding_model: Optional[str] = None
    class_id: Optional[int] = None
    data: Optional[str] = None
    workdir: str = field(default_factory=lambda: str(default_workdir()))
    jobs: int = field(default_factory=default_jobs)
    ablate: Optional[str] = None
    restriction: str = "global"
    keep_only: bool = False
    top_k: int = 5
    max_iter: int = 100
    compactness: float = 10.0
    iterations: int = 10
    permutations: int = 2000
    normalize: bool = False

    def __post_init__(self):
        if self.k < 1 or self.M < 1:
            raise FormatError(f"k and M must be >= 1 (got k={self.k}, M={self.M})")
        if len(self.resolutions) != 3 or any(int(r) < 2 for r in self.resolutions):
            raise FormatError(f"resolutions must be three segment counts >= 2, got {self.resolutions}")
        if self.masking not in MASKING_CHOICES:
            raise FormatError(f"masking must be one of {MASKING_CHOICES}, got {self.masking!r}")
        if self.ablate is not None and self.ablate not in ABLATION_CHOICES:
            raise FormatError(f"ablate must be one of {ABLATION_CHOICES}, got {self.ablate!r}")
        if self.restriction not in RESTRICTION_CHOICES:
            raise FormatError(f"restriction must be one of {RESTRICTION_CHOICES}, got {self.restriction!r}")
        if self.clusters < 1 or self.top_k < 1 or self.jobs < 1:
            raise FormatError("clusters, top_k and jobs must be >= 1")
        self.resolutions = [int(r) for r in self.resolutions]

    # ============= Layering =============

    @classmethod
    def from_dict(cls, data: Dict) -> "RunConfig":
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(data) - known)
        if unknown:
            raise FormatError(f"unknown config keys: {unknown}")
        try:
            return cls(**data)
        except TypeError as e:
            raise FormatError(f"invalid config: {e}") from e

    @classmethod
    def load(cls, path: Path) -> "RunConfig":
        path = Path(path)
        if not path.exists():
            raise FileNotFoundError(f"Config file not found at {path}")
        try:
            with path.open("r", encoding="utf-8") as f:
                data = json.load(f)
        except json.JSONDecodeError as e:
            raise FormatError(f"{path}: invalid JSON: {e}") from e
        if not isinstance(data, dict):
            raise FormatError(f"{path}: config must be a JSON object")
        return cls.from_dict(data)

    def with_overrides(self, **overrides) -> "RunConfig":
        """Apply flag values; None means 'flag not given'."""
        data = self.to_dict()
        data.update({k: v for k, v in overrides.items() if v is not None})
        return RunConfig.from_dict(data)

    def to_dict(self) -> Dict:
        return asdict(self)

    def report_dict(self) -> Dict:
        """The settings that determine results (no scheduling or path values)."""
        return {k: v for k, v in self.to_dict().items() if k not in RUNTIME_KEYS}

    # ============= Pipeline layout =============

    @property
    def root(self) -> Path:
        return Path(self.workdir)

    def path(self, stage: str) -> Path:
        """segments/, embeddings/, concepts/, attributions/ or reports/ under the workdir."""
        return self.root / stage
