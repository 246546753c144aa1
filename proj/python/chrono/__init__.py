"""Time-lapse synthesis toolkit.

Python surface over the C++ core: timestamped dataset utilities, GAN training
and inference entry points, and the guided color-upsampling solver. Images
cross the boundary as float32 [h, w, 3] arrays in [-1, 1].
"""

from chrono._core import (  # noqa: F401
    ChronoError,
    __version__,
    adv_fake_term,
    adv_real_term,
    encode_time,
    generate_synthetic_corpus,
    guided_upsample,
    inspect_checkpoint,
    load_manifest_stats,
    loss_cond,
    loss_rec,
    loss_uncond,
    make_schedule,
    neighbor_weight,
    normalize_timestamp,
    solve_transform,
    synthesize,
    train,
)
