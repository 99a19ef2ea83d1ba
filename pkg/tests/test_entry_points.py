"""Certificate discovery through the homoclinickit.certificates entry-point group."""

import importlib.metadata as im

import pytest

from homoclinickit.engine import Engine
from homoclinickit.plugin_api import CertificatePlugin, CertificateResult
from homoclinickit.plugins.symplecticity import SymplecticityCertificate


class ExternalCertificate(CertificatePlugin):
    requires = ["build"]

    def describe(self):
        return "external"

    def run(self, context, params):
        return CertificateResult("external", True)


class FakeEP:
    def __init__(self, name, obj=None, error=None):
        self.name = name
        self._obj = obj
        self._error = error

    def load(self):
        if self._error is not None:
            raise self._error
        return self._obj


def test_installed_entry_points():
    eps = im.entry_points(group="homoclinickit.certificates")
    if not eps:
        pytest.skip("package not installed")
    assert {"symplecticity", "four_intersections"} <= {ep.name for ep in eps}


def test_external_certificate_registered(monkeypatch):
    def fake_entry_points(group=None):
        if group == "homoclinickit.certificates":
            return [FakeEP("external", ExternalCertificate), FakeEP("broken", error=ImportError("gone")),
                    FakeEP("not_a_plugin", object), FakeEP("symplecticity", ExternalCertificate)]
        return []

    monkeypatch.setattr(im, "entry_points", fake_entry_points)
    engine = Engine()
    names = engine.get_available_certificates()
    assert "external" in names
    assert "broken" not in names and "not_a_plugin" not in names
    # built-ins win over entry points of the same name
    assert isinstance(engine._certificates["symplecticity"], SymplecticityCertificate)
