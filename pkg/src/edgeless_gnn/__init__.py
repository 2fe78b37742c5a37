"""Unsupervised inductive embedding of edgeless nodes through attribute kNN graphs."""
from .graph import UNREACHABLE, Graph, bfs_distances, build_graph, jaccard, largest_connected_component, two_hop_neighbors
from .knn import AttributeMatrix, build_knng, cosine_similarity, extend_knng
from .loss import LossParams, loss_and_embedding_grad, phi
from .models import ModelParams, Variant, backward, forward, init_params
from .sampling import QuadrupletBatch, SplitSpec, make_edgeless_scenario, mask_attributes, sample_epoch_batch, split_nodes
from .trainer import TrainConfig, adam_step, check_gradients, train
from .inference import infer_all, select_edgeless

__version__ = "0.1.0"
