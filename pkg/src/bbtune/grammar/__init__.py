from .spec import (
    OPERATORS,
    SIZE,
    Alternative,
    ClassDef,
    ClassRef,
    Marker,
    MarkerRef,
    NotWellFounded,
    Op,
    SpecAst,
    SpecError,
)
from .parser import format_spec, parse, tokenize
from .analysis import (
    SccReport,
    WellFoundedReport,
    classify,
    dependency_graph,
    strongly_connected_components,
    well_founded,
)
from .series import count_series, euler_totient, evaluate
