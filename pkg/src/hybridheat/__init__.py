"""Fine-scale, homogenized and hybrid heat-transfer simulation of battery packs."""

__version__ = "0.1.0"

from .geometry import UnitCellSpec, build_pack_layout, build_unit_cell  # noqa: E402
from .physics import ReferenceValues, ScenarioConfig, dimensionless_groups, pi_coefficients  # noqa: E402

__all__ = [
    "ReferenceValues",
    "ScenarioConfig",
    "UnitCellSpec",
    "__version__",
    "build_pack_layout",
    "build_unit_cell",
    "dimensionless_groups",
    "pi_coefficients",
]
