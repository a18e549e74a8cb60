"""Provider-agnostic LLM access with record/replay."""

from archevolve.llm.client import (
    ExtractionError,
    LLMClient,
    StructuredOutputError,
    extract_fenced,
    fenced_blocks,
)
from archevolve.llm.core import (
    Completion,
    PromptRequest,
    ProviderError,
    Transcript,
    TranscriptEntry,
    prompt_digest,
)
from archevolve.llm.fixtures import (
    Fixture,
    FixtureError,
    FixtureStore,
    load_fixtures,
    record_fixture,
)
from archevolve.llm.providers import (
    API_KEY_ENV,
    FixtureMissError,
    LiveConfig,
    LiveProvider,
    Provider,
    ReplayProvider,
    ScriptedProvider,
    ScriptExhaustedError,
)
from archevolve.llm.templates import (
    TemplateError,
    TemplateRegistry,
    UnboundPlaceholderError,
    UnknownTemplateError,
    render_template,
)

__all__ = [
    "API_KEY_ENV",
    "Completion",
    "ExtractionError",
    "Fixture",
    "FixtureError",
    "FixtureMissError",
    "FixtureStore",
    "LLMClient",
    "LiveConfig",
    "LiveProvider",
    "PromptRequest",
    "Provider",
    "ProviderError",
    "ReplayProvider",
    "ScriptExhaustedError",
    "ScriptedProvider",
    "StructuredOutputError",
    "TemplateError",
    "TemplateRegistry",
    "Transcript",
    "TranscriptEntry",
    "UnboundPlaceholderError",
    "UnknownTemplateError",
    "extract_fenced",
    "fenced_blocks",
    "load_fixtures",
    "prompt_digest",
    "record_fixture",
    "render_template",
]
