"""Preprocessor-aware hard-label attacks: python surface over the C++ core."""

from ._core import (  # noqa: F401
    AttackConfig,
    AttackResult,
    ExtractionReport,
    ExtractionRunOptions,
    HardLabelOracle,
    HttpOracle,
    HypothesisSpace,
    Image,
    Interp,
    LinearTransform,
    LocalOracle,
    PreprocessorSpec,
    QueryCounter,
    RecoveryResult,
    Rng,
    ServiceConfig,
    ToyModel,
    TracePoint,
    UnstablePair,
    VictimService,
    apply,
    apply_smooth,
    base_attack,
    biased_gradient_attack,
    build_linear,
    bypass_attack,
    clamp01,
    gen_unstable_pair,
    jpeg_roundtrip,
    jvp,
    l0_diff,
    l2_distance,
    linf_diff,
    output_size,
    png_decode,
    png_encode,
    probe_linear,
    recover_crop,
    recover_general,
    recover_pipeline,
    recover_resize,
    run_extraction,
    viable_toy_model,
    vjp,
)

__all__ = [name for name in dir() if not name.startswith("_")]
