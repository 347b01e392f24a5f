"""Retrieval lab for long legal-case queries.

Sparse ranking over an inverted index, query-word salience analysis
against human annotations, LLM-based query content selection, and a
graded-relevance evaluation harness.
"""

__version__ = "0.1.0"

from .corpus import (
    CaseDocument,
    DatasetBundle,
    QueryCase,
    RelevanceJudgments,
    SalienceAnnotation,
    annotation_stats,
    load_dataset,
    save_dataset,
)
from .errors import (
    CaselabError,
    ConfigError,
    IndexFormatError,
    IngestionError,
    LlmError,
    ValidationError,
)
from .evaluation import (
    FoldPlan,
    MetricConfig,
    evaluate_runs,
    kfold_splits,
    mean_average_precision,
    ndcg_at_k,
    precision_at_k,
)
from .index import CorpusStats, InvertedIndex, build_index, load_index, save_index
from .overlap import (
    AnnotationUnits,
    UnitizedText,
    info_ratio,
    match_unit,
    overlap_query,
    overlap_unit,
    summarize_reformulations,
)
from .rank import Bm25Params, QlParams, RankedRun, retrieve, score_bm25, score_ql, score_tfidf
from .reformulate import (
    LlmConfig,
    PromptTemplate,
    ReformulatedQuery,
    ReformulationType,
    annotation_to_query,
    assemble_query_text,
    parse_response,
    realign_key_sentences,
    reformulate_query,
    render_prompt,
)
from .salience import (
    AttentionExport,
    IntervalReport,
    WordImportance,
    aggregate_attention,
    attention_to_word_scores,
    bm25_word_importance,
    interval_precision_recall,
    joint_rank_distribution,
    tf_idf_by_interval,
)
from .tokenization import (
    SentenceSpan,
    Token,
    TokenizedText,
    TokenizerConfig,
    mark_salient_words,
    split_sentences,
    tokenize,
)
