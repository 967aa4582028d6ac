"""polex: desk-scale extraction of view-based database access-control
policies from a small web-handler DSL, via concolic execution."""

__version__ = "0.1.0"
