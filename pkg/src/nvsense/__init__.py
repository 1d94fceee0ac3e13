"""nvsense: NV-center sensing simulator and single-molecule assay analysis."""

from . import (  # noqa: F401
    config,
    constants,
    dataio,
    fieldcal,
    fitcore,
    noisebath,
    pulses,
    simkit,
    smassay,
)

__version__ = "0.1.0"
