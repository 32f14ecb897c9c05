"""File formats: splat fields, manifests, masks, features, and label stores."""

from gslift.io.gaussian_field import GaussianField
from gslift.io.ply import load_field, save_object_field
from gslift.io.manifest import Frame, Manifest, load_manifest, load_manifest_document
from gslift.io.masks import MaskMap, load_mask_map, save_mask_map
from gslift.io.features import FeatureTable, load_features, save_features
from gslift.io.labels import LabelStore, load_labels, save_labels

__all__ = [
    "GaussianField",
    "load_field",
    "save_object_field",
    "Frame",
    "Manifest",
    "load_manifest",
    "load_manifest_document",
    "MaskMap",
    "load_mask_map",
    "save_mask_map",
    "FeatureTable",
    "load_features",
    "save_features",
    "LabelStore",
    "load_labels",
    "save_labels",
]
