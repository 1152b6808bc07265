"""Base classifiers: from-scratch RBF-SVM (SMO), 1-NN, and grid-trained pools."""

from forefront.learners.knn import KnnModel, predict_knn, train_knn
from forefront.learners.pool import ClassifierPool, TrainedClassifier, default_grid, train_grid
from forefront.learners.svm import (
    SvmModel,
    SvmParams,
    load_model,
    predict,
    predict_posteriors,
    rbf_kernel,
    save_model,
    train_svm,
)

__all__ = [
    "ClassifierPool",
    "KnnModel",
    "SvmModel",
    "SvmParams",
    "TrainedClassifier",
    "default_grid",
    "load_model",
    "predict",
    "predict_knn",
    "predict_posteriors",
    "rbf_kernel",
    "save_model",
    "train_grid",
    "train_knn",
    "train_svm",
]
