"""Services for siri-bench."""

from .data_manager import DataManager
from .index_api import PersistentIndex
from .managers import IndexManager, RootManager, verify_proof
from .mbt import MerkleBucketTree
from .mpt import MerklePatriciaTrie
from .mvmb_tree import MvmbTree
from .node_store import NodeStore
from .pos_tree import PosTree

__all__ = [
    "DataManager",
    "IndexManager",
    "MerkleBucketTree",
    "MerklePatriciaTrie",
    "MvmbTree",
    "NodeStore",
    "PersistentIndex",
    "PosTree",
    "RootManager",
    "verify_proof",
]
