import pytest

from motclust.synth import ObjectSpec, SceneSpec, generate_scene


@pytest.fixture
def two_object_scene():
    """Two rigid squares with opposite integer velocities whose pixels exit
    the frame over time, so trajectories end in every window."""
    spec = SceneSpec(
        height=32,
        width=48,
        frames=10,
        background=16.0,
        objects=[
            ObjectSpec(shape="rectangle", top=4, left=28, height=8, width=20,
                       velocity=(2, 0), color=200.0),
            ObjectSpec(shape="rectangle", top=20, left=0, height=8, width=20,
                       velocity=(-2, 0), color=120.0),
        ],
    )
    return generate_scene(spec)


@pytest.fixture
def occlusion_scene():
    """A moving square passes behind a static one (drawn later, so on top).

    The mover covers columns [2+2t, 7+2t]; the blocker statically covers rows
    8..15, columns 18..25.  At each transition t -> t+1 for t in {5, 6, 7} the
    mover's pixels in columns {16, 17} land under the blocker.
    """
    spec = SceneSpec(
        height=24,
        width=40,
        frames=10,
        objects=[
            ObjectSpec(shape="rectangle", top=9, left=2, height=6, width=6,
                       velocity=(2, 0), color=200.0),
            ObjectSpec(shape="rectangle", top=8, left=18, height=8, width=8,
                       velocity=(0, 0), color=120.0),
        ],
    )
    return generate_scene(spec)
