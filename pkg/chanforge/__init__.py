from .abspath import AbsPath
from .array_geom import ArrayConfig, Direction
from .canyon_tracer import Scene, default_scene
from .channel_synth import ChannelMatrix
from .ray_model import PairRecord, Ray

__all__ = [
    "AbsPath",
    "ArrayConfig",
    "ChannelMatrix",
    "Direction",
    "PairRecord",
    "Ray",
    "Scene",
    "default_scene",
]
__version__ = "0.1.0"
