from dataset import LabelSet
from errors import ParameterError


class ModelNode:
    """
    Node in the model inheritance graph: one model state together with the data it was trained on
    """
    def __init__(self, node_id: str, model=None, train_labels: LabelSet = None, dataset_ref: str = None, model_fim=None):
        """
        @param model: LinearSoftmaxModel, None for an untrained topology skeleton
        @param train_labels: labels present in the node's training data
        @param dataset_ref: reference to the node's own training data D_j; None for pure aggregation nodes
        @param model_fim: model FIM published along with the model, if already computed
        """
        self.node_id = node_id
        self.model = model
        self.train_labels = train_labels if train_labels is not None else LabelSet()
        self.dataset_ref = dataset_ref
        self.model_fim = model_fim
        if model is not None:
            self.train_labels.check(model.num_classes)
            if model_fim is not None and len(model_fim) != model.num_params:
                raise ParameterError("node %s: FIM of length %d for %d parameters" % (node_id, len(model_fim), model.num_params))

    def replace(self, **kwargs) -> "ModelNode":
        fields = dict(
            model=self.model,
            train_labels=self.train_labels,
            dataset_ref=self.dataset_ref,
            model_fim=self.model_fim)
        fields.update(kwargs)
        return ModelNode(self.node_id, **fields)

    def __repr__(self):
        return "ModelNode(%s, labels=%s, data=%s)" % (self.node_id, self.train_labels, self.dataset_ref)
