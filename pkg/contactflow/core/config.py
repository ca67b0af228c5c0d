from pathlib import Path

from pydantic_settings import BaseSettings


class Settings(BaseSettings):
    # Application Settings
    APP_NAME: str = "contactflow"
    APP_VERSION: str = "1.0.0"

    # ==========================================
    # Output
    # ==========================================
    # The only value meant to come from the environment
    CONTACTFLOW_OUTPUT_DIR: str = "reports"

    # ==========================================
    # Integrator Defaults
    # ==========================================
    INTEGRATOR_STEP: float = 1e-3
    INTEGRATOR_TOLERANCE: float = 1e-6
    FD_STEP: float = 1e-4
    DOMAIN_MARGIN: float = 1e-3

    # ==========================================
    # Verification Tolerances
    # ==========================================
    CLOSED_FORM_TOLERANCE: float = 1e-9
    FD_TOLERANCE: float = 1e-6
    PULLBACK_TOLERANCE: float = 1e-5
    CROSS_CHECK_TOLERANCE: float = 1e-5
    ZERO_NORM_TOLERANCE: float = 1e-10

    # ==========================================
    # Metrics
    # ==========================================
    GRID_POINTS_PER_AXIS: int = 12
    TIME_KNOTS: int = 21
    MATCH_TOLERANCE: float = 1e-5
    COVERAGE_TOLERANCE: float = 1e-10
    SAMPLE_POINTS: int = 1000

    # ==========================================
    # Reparameterization
    # ==========================================
    SPEED_TABLE_KNOTS: int = 257
    SPEED_DEVIATION_BUDGET: float = 0.01
    FLAT_DELTA_MAX: float = 0.2
    FLAT_DELTA_MIN: float = 1e-5

    # ==========================================
    # Regularization
    # ==========================================
    LATTICE_POINTS_PER_AXIS: int = 11
    LOOP_SUBSTEPS: int = 8
    MARGIN_REFINEMENT: int = 4

    # ==========================================
    # Non-smooth Constructions
    # ==========================================
    RADIUS_FLOOR: float = 1e-8
    PROFILE_TABLE_POINTS: int = 4001

    @property
    def output_dir(self) -> Path:
        """Directory reports are written to unless a run overrides it."""
        return Path(self.CONTACTFLOW_OUTPUT_DIR)

    class Config:
        env_file = ".env"
        case_sensitive = True
        extra = "ignore"


settings = Settings()
