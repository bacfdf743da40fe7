# Return-to-go trajectories, dataset selection and segment sampling
