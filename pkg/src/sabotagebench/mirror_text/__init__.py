"""Textual mirror test: questionnaire, providers, scoring, fixtures."""
from .protocol import (
    AnswerPool,
    AnswerRecord,
    FixtureSet,
    GuessOutcome,
    RankingAggregate,
    RankingMatrix,
    aggregate_rankings,
    export_fixtures,
    import_fixtures,
    run_protocol,
    self_identification,
    self_rating_heatmap,
)
from .providers import (
    FixtureProvider,
    HttpProvider,
    Provider,
    fixture_providers,
    http_providers,
    provider_transcripts,
)
from .questionnaire import PREAMBLE, QUESTIONS, SYSTEM_IDS, Questionnaire
from .runner import (
    MirrorTextReport,
    bundled_fixture_path,
    run_mirror_text_experiment,
)

__all__ = [
    "AnswerPool",
    "AnswerRecord",
    "FixtureProvider",
    "FixtureSet",
    "GuessOutcome",
    "HttpProvider",
    "MirrorTextReport",
    "PREAMBLE",
    "Provider",
    "QUESTIONS",
    "Questionnaire",
    "RankingAggregate",
    "RankingMatrix",
    "SYSTEM_IDS",
    "aggregate_rankings",
    "bundled_fixture_path",
    "export_fixtures",
    "fixture_providers",
    "http_providers",
    "import_fixtures",
    "provider_transcripts",
    "run_mirror_text_experiment",
    "run_protocol",
    "self_identification",
    "self_rating_heatmap",
]
