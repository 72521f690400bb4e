# Thing, stuff and unified query decoders
