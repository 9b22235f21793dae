# Import schemas for easy access
from .schemas import (
    AttackReport,
    CertificationResult,
    CertificationRow,
    DatasetManifest,
    ErrorResponse,
    FalsificationRow,
    Hyperparameters,
    NoiseSpec,
    PoisonAccounting,
    Region,
    RegionTable,
    TriggerSpec,
    VoteCounts,
)
