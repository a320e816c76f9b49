"""Pulsed balanced homodyne detection: detector design, trace synthesis and analysis."""

from .analysis import (
    PsdEstimate,
    QuadratureSeries,
    SqueezingResult,
    cmrr,
    electronic_efficiency,
    linearity_sweep,
    slot_integrate,
    snc_spectrum,
    squeezing_from_series,
    welch_psd,
)
from .catalog import default_catalog, load_catalog
from .circuit import (
    DetectorConfig,
    FilterSpec,
    TiaConfig,
    bode_analysis,
    demux,
    design_feedback_capacitance,
    subtract_and_convert,
    tia_cutoff,
)
from .config import ExperimentConfig
from .errors import (
    CalibrationError,
    ChannelError,
    ComponentNotFoundError,
    ConfigError,
    CorruptFileError,
    DomainError,
    PulseHDError,
    ShapeError,
)
from .kernels import BACKEND
from .quantum import (
    EfficiencyBudget,
    LocalOscillator,
    QuadratureState,
    apply_loss,
    electronic_efficiency_from_snc,
    homodyne_difference_moments,
    pd_quantum_efficiency,
    quadrature_variance,
    total_efficiency,
)
from .synth import (
    ImperfectionConfig,
    PhaseScan,
    SourceConfig,
    SqueezingSpectrum,
    TraceBuffer,
    calibrate_noise_to_snc,
    synthesize,
    synthesize_common_mode,
    synthesize_dark,
    synthesize_shot,
)
from .traceio import read_trace, write_trace

__version__ = "0.1.0"
