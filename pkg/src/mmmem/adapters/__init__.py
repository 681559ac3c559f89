from .base import (
    AdapterContract,
    AdapterSet,
    Capability,
    CandidateScorer,
    Captioner,
    Embedder,
    EntityExtractor,
    Judge,
)
from .remote import (
    RemoteCaptioner,
    RemoteClient,
    RemoteConfig,
    RemoteExtractor,
    RemoteResult,
    RemoteScorer,
    parse_choice_letter,
    parse_scores,
)
from .stubs import (
    ConstantScorer,
    OverlapScorer,
    StubCaptioner,
    StubEmbedder,
    StubExtractor,
    normalize_text,
    stub_adapters,
    tokenize,
)
