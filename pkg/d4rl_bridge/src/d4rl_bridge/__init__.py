from .convert import BridgeError, ConversionError, SchemaError, convert, split_episodes

__all__ = ["BridgeError", "ConversionError", "SchemaError", "convert", "split_episodes"]
