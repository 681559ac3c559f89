"""Hierarchical multimodal memory engine.

Three layers built bottom-up from a frame stream (sensory buffer, episodic
stream, symbolic schema), an exact variational IB checker, a toy SIB-GRPO
trainer for the memory manager, and entropy-gated top-down retrieval.
"""

from .episodic import Action, ConsolidationState, EpisodicNode, consolidate_pass, decide_rule
from .pyramid import MemoryPyramid, build_pyramid
from .retrieval import Query, RetrievalConfig, answer
from .schema import SchemaGraph, build_schema
from .sensory import Clip, Frame, SensoryItem, build_sensory_buffer
from .store import load_memory, save_memory

__version__ = "0.1.0"
