"""Event-based, capacity-constrained transit network loading."""

from ._backend import BACKEND
from .core import (ONBOARD, QUEUED, STATE_NAMES, STRANDED, TAPPED_OUT, PassengerSet,
                   SimulationRecord, background_passengers, has_service, largest_remainder,
                   materialize_passengers, run, simulate, substream)
from .network import (ARRIVAL, DEPARTURE, CompiledNetwork, EventList, apply_incident,
                      build_events, compile_network, median_headways)
from .offload import offloaded_demand

__all__ = [
    "BACKEND", "ARRIVAL", "DEPARTURE", "CompiledNetwork", "EventList", "PassengerSet",
    "SimulationRecord", "ONBOARD", "QUEUED", "STRANDED", "TAPPED_OUT", "STATE_NAMES",
    "apply_incident", "background_passengers", "build_events", "compile_network",
    "has_service", "largest_remainder", "materialize_passengers", "median_headways",
    "offloaded_demand", "run", "simulate", "substream",
]
