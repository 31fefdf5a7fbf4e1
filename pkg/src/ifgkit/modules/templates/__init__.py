from .core import Template, TemplateError, TemplateLibrary, adjust_template, class_primitives, generate_template
from .ply_io import PlyParseError, read_template, write_template
from .CONSTANTS import TemplateCONSTANTS, class_name

__all__ = [
    'Template', 'TemplateError', 'TemplateLibrary', 'adjust_template', 'class_primitives', 'generate_template',
    'PlyParseError', 'read_template', 'write_template', 'TemplateCONSTANTS', 'class_name',
]
