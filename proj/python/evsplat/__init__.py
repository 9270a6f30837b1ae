"""Event-supervised 3D Gaussian splatting."""

from ._core import (
    CameraView,
    EventStream,
    GaussianScene,
    Intrinsics,
    RuntimeFailure,
    SweepTrajectory,
    ValidationError,
    accumulate,
    cli,
    linlog,
    make_reference_scene,
    noise_filter,
    pose_at,
    predicted_difference,
    psnr,
    random_init,
    read_events,
    read_scene,
    render,
    roundtrip_check,
    sample_view_times,
    set_worker_threads,
    simulate_events,
    ssim,
    total_loss,
    worker_threads,
    write_events,
    write_scene,
)

__all__ = [name for name in dir() if not name.startswith("_")]
