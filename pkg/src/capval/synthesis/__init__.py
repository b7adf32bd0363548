"""Validation-set synthesis: LLM clients, prompt contracts, and the pipeline."""

from capval.synthesis.client import EndpointConfig, HttpChatEndpoint, llm_complete
from capval.synthesis.parsers import (
    Expansion,
    QuestionBlock,
    parse_expansion_output,
    parse_extraction_output,
    parse_filter_verdict,
    render_sample_text,
)
from capval.synthesis.pipeline import (
    EndpointSuite,
    FilteredEvidence,
    KnowledgeFactor,
    RunReport,
    SynthesisConfig,
    SynthesisResult,
    ValidationSample,
    blank_fill_text,
    expand_scenarios,
    extract_knowledge,
    filter_relevance,
    read_validation_set,
    samples_content_checksum,
    synthesize_domain,
    write_validation_set,
)
from capval.synthesis.templates import EXPANSION, EXTRACTION, FILTERING, load_template

__all__ = [
    "EndpointConfig", "HttpChatEndpoint", "llm_complete",
    "Expansion", "QuestionBlock",
    "parse_expansion_output", "parse_extraction_output", "parse_filter_verdict",
    "render_sample_text",
    "EndpointSuite", "FilteredEvidence", "KnowledgeFactor", "RunReport",
    "SynthesisConfig", "SynthesisResult", "ValidationSample",
    "blank_fill_text", "expand_scenarios", "extract_knowledge", "filter_relevance",
    "read_validation_set", "samples_content_checksum", "synthesize_domain",
    "write_validation_set",
    "EXPANSION", "EXTRACTION", "FILTERING", "load_template",
]
