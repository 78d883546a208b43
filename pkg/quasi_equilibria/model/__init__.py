from . import gallery, instance, loader
from .gallery import GALLERY, build_gallery
from .instance import (
    Box,
    FollowerSpec,
    GameInstance,
    LeaderSpec,
    follower_variable_names,
    leader_objective,
    leader_variable_names,
)
from .loader import dump_instance, instance_document, load_instance
