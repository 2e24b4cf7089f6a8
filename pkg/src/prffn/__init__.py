"""Dual-modality pixel classification: Mueller-matrix polarimetry features
fused with H&E radiomics features by a two-tier attention network."""

__version__ = "0.1.0"
