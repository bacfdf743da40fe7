# Ledger queries
