# Level-1 policy learning (TD3)
