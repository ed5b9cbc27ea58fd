/* stand-in for https://wallet.nimiq.com/js/wallet.js */
(function () { self.loaded = (self.loaded || []).concat("https://wallet.nimiq.com/js/wallet.js"); })();
