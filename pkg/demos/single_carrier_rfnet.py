"""Joint modulation and frequency-shift recognition with a one-layer RFNet.

18 classes: 6 modulations x shifts of 0, 1 and 2 kHz, at 20 dB SNR and 10
samples per symbol. The model is a single 3x3 conv layer with 25 filters over
a 20x20 I/Q tensor, followed directly by the output layer.
This is a short run (a few minutes); the acceptance suite trains longer.
"""
import numpy as np

from polyrf.dataset import DatasetSpec, make_dataset
from polyrf.polyrx import ClassCatalog, confusion_matrix
from polyrf.rfnet import RfnetArch, RfnetModel, TrainConfig, predict, save_model, train_online

catalog = ClassCatalog.single_carrier_18(samples_per_symbol=10)
arch = RfnetArch(m=1, c=(25,), f=3, k=0, input_w=20, input_h=20, n_classes=len(catalog))
print(arch.n_params(), "parameters")


# a fresh draw of 500 tensors per class every epoch
def draw(epoch):
    return make_dataset(catalog.configs, DatasetSpec(n_per_class=500, seed=epoch))


res = train_online(draw, arch, TrainConfig(learning_rate=1e-3, l2_lambda=1e-5, epochs=20))
for e in range(0, 20, 4):
    print(f"epoch {e:2d}  loss {res.loss_history[e]:.3f}  train acc {res.accuracy_history[e]:.3f}")
model = RfnetModel(arch, res.params)

x, y = make_dataset(catalog.configs, DatasetSpec(n_per_class=300, seed=10**6))
print("held-out accuracy (float):", np.mean(predict(model, x) == y))
print("fixed-point argmax agrees on", np.mean(predict(model, x, "fixed") == predict(model, x)))

# rows are the true class; most errors stay inside one shift group
cm = confusion_matrix(x, y, model)
for name, row in zip(catalog.names, cm):
    print(f"{name:14s}", " ".join(f"{v:3d}" for v in row))

# shift is recognised far better than modulation order
shift_ok = np.mean(predict(model, x) % 3 == y % 3)
print("shift correct:", shift_ok)

save_model("single_carrier_rfnet.rfnw", model)
