# Return-conditioned decoder-only transformer
