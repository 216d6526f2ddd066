"""Dynamic grayscale snippets: video motion encoding, pretext datasets,
motion analysis, and an optical-flow runtime baseline."""

__version__ = "0.1.0"

from dgs.snippets import (  # noqa: F401
    DgsImage,
    Segment,
    SegmentSpec,
    encode_video,
    load_dgs,
    mean_gray,
    resize_dgs,
    save_dgs,
    segment_video,
    synthesize_dgs,
    to_gray,
)
from dgs.video_io import Frame, VideoSource, open_source, read_frame  # noqa: F401
