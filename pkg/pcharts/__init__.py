"""
pcharts - 概率层次状态机 (pCharts) 的编译器与验证器

读取 pCharts 模型文件，将其规范化为带守卫的命令，构建显式 MDP，
求解概率与期望代价查询，并导出 PRISM 模型与 C 代码。
"""

__version__ = "1.0.0"
__author__ = "Your Name"
__email__ = "your.email@example.com"
__description__ = "Compiler and verifier for probabilistic hierarchical state machines"
__url__ = "https://github.com/your-org/pcharts"

# 导出主要类和函数
from .chart import Chart, ChartBuilder, check_wellformed
from .checker import Checker, evaluate_all
from .codegen import generate_code
from .config import Config
from .dsl import parse_chart, parse_query, pretty_print
from .exceptions import (
    ChartError,
    CheckerError,
    CodegenError,
    ConfigurationError,
    DslSyntaxError,
    NormalizationError,
    PChartsError,
    StateLimitError,
)
from .mdp import Mdp, build_mdp
from .normalizer import FlatSystem, apply_digital_clocks, normalize
from .pipeline import Pipeline
from .prism import export_model, export_properties

__all__ = [
    "__version__",
    "__author__",
    "__email__",
    "__description__",
    "__url__",
    "Chart",
    "ChartBuilder",
    "Checker",
    "Config",
    "FlatSystem",
    "Mdp",
    "Pipeline",
    "apply_digital_clocks",
    "build_mdp",
    "check_wellformed",
    "evaluate_all",
    "export_model",
    "export_properties",
    "generate_code",
    "normalize",
    "parse_chart",
    "parse_query",
    "pretty_print",
    "ChartError",
    "CheckerError",
    "CodegenError",
    "ConfigurationError",
    "DslSyntaxError",
    "NormalizationError",
    "PChartsError",
    "StateLimitError",
]
