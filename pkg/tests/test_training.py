from dataclasses import replace

import pytest

from poolroutes.experiments.training import (DivergenceError, TrainConfig, default_config,
                                             evaluate, train)
from poolroutes.network import Activation, ArchSpec, ConvBlock, Fc, Flatten, Pool, SoftmaxOutput
from poolroutes.optim import hyper_table
from poolroutes.pooling import AP, MP
from conftest import separable_dataset

TOY = ArchSpec([ConvBlock(1, 6, kernel=5, padding=0, batchnorm=False), Pool(AP(2)),
                ConvBlock(1, 8, kernel=5, padding=0, batchnorm=False), Pool(MP(2)),
                Flatten(), Fc(32), Activation(), SoftmaxOutput()], "toy")


def test_training_learns_separable_data():
    tr, te = separable_dataset(600, seed=0), separable_dataset(200, seed=1)
    cfg = default_config("A-LeNet5-a", epochs=3, seed=0, augment=False, dtype="float64")
    rep, net = train(TOY, cfg, tr, te)
    assert len(rep.train_loss) == 3 and rep.train_loss[-1] < rep.train_loss[0]
    assert rep.final_test_acc > 0.6
    assert rep.initial_test_acc < 0.3
    assert evaluate(net, te) == rep.final_test_acc


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_divergence_is_reported():
    tr = separable_dataset(200)
    cfg = default_config("A-LeNet5-a", epochs=2, augment=False)
    h = hyper_table("A-LeNet5-a")
    big = replace(h.groups["CL"], lr=1e6, schedule=replace(h.groups["CL"].schedule,
                                                           base_rate=1e6))
    cfg.hypers = replace(h, groups={"CL": big, "FC": big})
    with pytest.raises(DivergenceError) as e:
        train(TOY, cfg, tr)
    assert e.value.report.arch == "toy"


def test_identical_seeds_identical_losses():
    tr = separable_dataset(300)
    cfg = default_config("A-LeNet5-a", epochs=1, seed=11)
    a, _ = train(TOY, cfg, tr)
    b, _ = train(TOY, cfg, tr)
    assert a.train_loss == b.train_loss
    c, _ = train(TOY, default_config("A-LeNet5-a", epochs=1, seed=12), tr)
    assert c.train_loss != a.train_loss


def test_config_defaults_and_validation():
    cfg = default_config("vgg8")
    assert cfg.hypers.name == "A-VGG8" and cfg.epochs == 200 and cfg.batch_size == 100
    with pytest.raises(ValueError):
        TrainConfig(hyper_table("A-VGG6"), epochs=-1)
    assert cfg.to_dict()["hypers"]["groups"]["CL"]["lr"] == 0.0145
