# coding: utf-8

# # Training a small codec
#
# The desk configuration maps a 1x32x32 image to four 64-wide code vectors,
# each kept 8-sparse. We train briefly on synthetic shapes and look at what
# comes out. Train longer (20+ epochs) for usable reconstructions.

# In[1]:

import numpy as np

from sca import Dataset, NetworkConfig, train
from sca.data import synthetic_images
from sca.metrics import psnr, ssim


# In[2]:

cfg = NetworkConfig.desk()
print(cfg)
images = synthetic_images(400, seed=1)
data = Dataset.from_array(images, split_seed=0)
print(len(data.train_ids), "train /", len(data.test_ids), "test")


# Each epoch reshuffles the train split with the run seed. The result holds
# the model and the mean loss of every epoch.

# In[3]:

result = train(cfg, data, epochs=3, batch_size=32, seed=0)
print(result.history)
model = result.model


# Every group of every encoded item has exactly k nonzeros.

# In[4]:

ids = data.test_ids[:20]
x = data.stack(ids)
codes = model.encode_batch(x, ids)
print(codes[0].support)
print({tuple(c.nonzero_counts().tolist()) for c in codes})


# In[5]:

recon = [model.decode(c)[0] for c in codes]
print("PSNR", np.mean([psnr(a, r) for a, r in zip(x, recon)]))
print("SSIM", np.mean([ssim(a, r) for a, r in zip(x, recon)]))


# Checkpoints are plain binary files, so a saved model decodes identically
# after reloading.

# In[6]:

import tempfile, os

from sca.net import CodecNet

path = os.path.join(tempfile.mkdtemp(), "model.scam")
model.save(path)
again = CodecNet.load(path)
print(np.array_equal(again.decode(codes[0]), model.decode(codes[0])))
