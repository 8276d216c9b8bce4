"""Anytime-valid comparison and fusion of two competing forecast series."""

__version__ = "0.1.0"

from .errors import (  # noqa: E402
    ConfigError,
    DataError,
    DegenerateScaleError,
    ESelectionError,
    IngestError,
    InputShapeError,
    InsufficientHistoryError,
    OutOfRangeError,
    ParameterError,
    SequencingError,
)
from .fusion import (  # noqa: E402
    FusedForecast,
    SelectionDecision,
    Source,
    Strategy,
    decide,
    fuse,
    initial_decision,
    weights,
)
from .savi import (  # noqa: E402
    ConfidenceBand,
    EProcessState,
    SlidingEProcess,
    TestVerdict,
    WindowSeries,
    confidence_band,
    psi_e,
    psi_n,
    restart_window,
    update_eprocess,
    update_variance,
    verdict,
)
from .scores import ForecastTriple, RollingWindow, ScoreStream, mae, rolling_average, score_difference  # noqa: E402
from .transform import TransformSpec, bound, calibrate_scale, unbound  # noqa: E402
