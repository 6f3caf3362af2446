"""Shared fixtures for opaque-virt tests."""

import pytest

from src.opaque_virt.library import Interaction, InteractionLibrary
from src.opaque_virt.models import EntropyMethod, ScalerSpec

# Eight recorded exchanges with a directory service: searches (S) and adds (A).
DIRECTORY_EXAMPLE = [
    (b"{id:001,op:S,sn:Du}", b"{id:001,op:SearchRsp,result:Ok,gn:Miao,sn:Du,mobile:5362634}"),
    (b"{id:013,op:S,sn:Versteeg}", b"{id:013,op:SearchRsp,result:Ok,gn:Steve,sn:Versteeg,mobile:9374723}"),
    (b"{id:024,op:A,sn:Schneider}", b"{id:024,op:AddRsp,result:Ok}"),
    (b"{id:275,op:S,sn:Han}", b"{id:275,op:SearchRsp,result:Ok,gn:Jun,sn:Han,mobile:33333333}"),
    (b"{id:490,op:S,sn:Grundy}", b"{id:490,op:SearchRsp,result:Ok,gn:John,sn:Grundy,mobile:44444444}"),
    (b"{id:773,op:S,sn:Hine}", b"{id:273,op:SearchRsp,result:Ok,sn:Hine,mobile:123456}"),
    (b"{id:887,op:A,sn:Will}", b"{id:887,op:AddRsp,result:Ok}"),
    (b"{id:906,op:A,sn:Hine}", b"{id:906,op:AddRsp,result:Ok}"),
]

# Unrecorded search whose nearest recorded request is a search.
UNSEEN_SEARCH = b"{id:552,op:S,sn:Hossain}"

# Unrecorded search whose byte-nearest recorded request is an add.
MISMATCHED_OP_REQUEST = b"{id:024,op:S,sn:Schneider}"

WEIGHTING_METHOD = EntropyMethod.RICHNESS
WEIGHTING_SCALER = ScalerSpec.hyperbolic(a=1.0, c=10.0)


def build_directory_library() -> InteractionLibrary:
    return InteractionLibrary(
        Interaction(request=request, response=response) for request, response in DIRECTORY_EXAMPLE
    )


@pytest.fixture
def directory_library() -> InteractionLibrary:
    """The eight-exchange directory service library."""
    return build_directory_library()
