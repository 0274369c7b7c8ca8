import json
import typing


_PRIMITIVES = {
    bool: bool,
    int: int,
    float: float,
    str: str,
}


def _make_converter(type_, to_json):
    """Returns a function converting a value of type_ to or from JSON"""
    if type_ in _PRIMITIVES:
        return _PRIMITIVES[type_]

    # A bare list holds JSON values as they are
    if type_ is list:
        return list

    origin = getattr(type_, '__origin__', None)
    if origin == list:
        item = _make_converter(type_.__args__[0], to_json)
        return lambda v: [item(x) for x in v]
    elif origin is None and isinstance(type_, type) and issubclass(type_, BaseModel):
        if to_json:
            return lambda v: v.to_json()
        else:
            return type_.from_json

    raise TypeError(f"Unsupported type {type_}")


class ModelField:
    def __init__(self, python_name, json_name, type_, *, optional=False):
        self.python_name = python_name
        self.json_name = json_name
        self.optional = optional
        self.to_json = _make_converter(type_, to_json=True)
        self.from_json = _make_converter(type_, to_json=False)


class ScalarField(ModelField):
    def init_value(self, kwargs):
        value = kwargs.get(self.python_name)
        if value is None and not self.optional:
            raise AttributeError(f"{self.json_name} must be specified")

        return value

    def json_include(self, instance):
        if self.optional:
            return getattr(instance, self.python_name) is not None
        else:
            return True

    def json_value(self, instance):
        return self.to_json(getattr(instance, self.python_name))

    def python_value(self, data):
        value = data.get(self.json_name)
        if value is None:
            if not self.optional:
                raise ValueError(
                    f"{self.python_name} is not optional, but value is missing or null")
            return None
        else:
            return self.from_json(value)


class ListField(ModelField):
    """Lists default to empty, and are always written, so an empty trace is visible"""
    def init_value(self, kwargs):
        return list(kwargs.get(self.python_name, ()))

    def json_include(self, instance):
        return True

    def json_value(self, instance):
        return self.to_json(getattr(instance, self.python_name))

    def python_value(self, data):
        return self.from_json(data.get(self.json_name, []))


class DictField(ModelField):
    def __init__(self, python_name, json_name, type_, *, optional=False):
        super().__init__(python_name, json_name, type_.__args__[1], optional=optional)

    def init_value(self, kwargs):
        return dict(kwargs.get(self.python_name, {}))

    def json_include(self, instance):
        return bool(getattr(instance, self.python_name))

    def json_value(self, instance):
        d = getattr(instance, self.python_name)
        return {str(k): self.to_json(v) for k, v in d.items()}

    def python_value(self, data):
        d = data.get(self.json_name, {})
        return {str(k): self.from_json(v) for k, v in d.items()}


def _make_model_field(name, type_):
    json_name = name

    args = typing.get_args(type_)
    if typing.get_origin(type_) is typing.Union and len(args) == 2 and type(None) in args:
        type_ = args[0] if args[1] is type(None) else args[1]
        optional = True
    else:
        optional = False

    origin = getattr(type_, '__origin__', None)
    if origin == dict:
        if type_.__args__[0] != str:
            raise TypeError(f"{name}: Only dict[str] is supported")
        return DictField(name, json_name, type_, optional=optional)
    elif origin == list:
        if optional:
            raise TypeError(f"{name}: Optional[] cannot be used for list fields")
        return ListField(name, json_name, type_)
    else:
        return ScalarField(name, json_name, type_, optional=optional)


class BaseModelMeta(type):
    def __new__(cls, name, bases, dct):
        x = super().__new__(cls, name, bases, dct)
        annotations = x.__dict__.get('__annotations__', None)

        fields = {}
        for superclass in reversed(x.__mro__[1:]):
            fields.update(getattr(superclass, '__fields__', {}))

        if annotations:
            fields.update({k: _make_model_field(k, v) for k, v in annotations.items()})

        x.__fields__ = fields
        return x


class BaseModel(metaclass=BaseModelMeta):
    def __init__(self, **kwargs):
        for field in self.__fields__.values():
            setattr(self, field.python_name, field.init_value(kwargs))

    def to_json(self):
        return {
            field.json_name: field.json_value(self)
            for field in self.__fields__.values()
            if field.json_include(self)
        }

    def to_json_text(self, indent=None):
        return json.dumps(self.to_json(), sort_keys=True, indent=indent)

    @classmethod
    def from_json(cls, data):
        result = cls.__new__(cls)
        for field in cls.__fields__.values():
            setattr(result, field.python_name, field.python_value(data))

        return result

    @classmethod
    def from_json_text(cls, text):
        return cls.from_json(json.loads(text))

    def __eq__(self, other):
        if type(self) is not type(other):
            return NotImplemented
        return self.to_json() == other.to_json()
